//! Scenario files: one JSON document per run, see `docs/scenario.md`.

use std::fs;
use std::path::Path;

use pluridisc::envelope::SearchConfig;
use pluridisc::expr::ExprFn;
use pluridisc::max_principle::SuitePair;
use pluridisc::objective::PiecewiseObjective;
use pluridisc::perron::RelaxConfig;
use pluridisc::thinness::Verdict;
use pluridisc::{Domain, GridSpec, Point};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    /// Complex dimension, 1 or 2.
    pub n: usize,
    /// Replaces `search.seed`; the `--seed` flag replaces both.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub relax: RelaxConfig,
    pub task: Task,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Envelope(EnvelopeTask),
    Thinness(ThinnessTask),
    MaxPrinciple(MaxPrincipleTask),
}

impl Task {
    pub fn kind(&self) -> &'static str {
        match self {
            Task::Envelope(_) => "envelope",
            Task::Thinness(_) => "thinness",
            Task::MaxPrinciple(_) => "max_principle",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EngineChoice {
    Disc,
    Perron,
    Both,
}

fn default_engine() -> EngineChoice {
    EngineChoice::Both
}

fn default_tolerance() -> f64 {
    0.02
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeTask {
    pub objective: PiecewiseObjective,
    /// Cartesian grid for the Perron engine. Exactly one of `grid` and
    /// `radial_nodes` is required when the Perron engine runs.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Radial node count for unitarily invariant scenarios in C^2.
    #[serde(default)]
    pub radial_nodes: Option<usize>,
    pub probes: Vec<Point>,
    #[serde(default = "default_engine")]
    pub engine: EngineChoice,
    /// A probe passes when `disc >= perron - sandwich_tolerance`.
    #[serde(default = "default_tolerance")]
    pub sandwich_tolerance: f64,
    #[serde(default)]
    pub reference: Option<Reference>,
}

/// Known envelope values: Perron values must lie within `tolerance` of
/// `expr`, disc values must not fall below `expr - tolerance`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub expr: ExprFn,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_oracle_resolution() -> usize {
    128
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThinnessTask {
    pub set: Domain,
    pub x: Point,
    pub v_radius: f64,
    pub epsilon: f64,
    /// Nodes per axis of the oracle grid (even).
    #[serde(default = "default_oracle_resolution")]
    pub oracle_resolution: usize,
    pub expected_verdict: Verdict,
}

fn default_boundary_k() -> usize {
    4096
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxPrincipleTask {
    #[serde(rename = "X")]
    pub x: Domain,
    pub grid: GridSpec,
    #[serde(default = "default_boundary_k")]
    pub boundary_k: usize,
    /// Pairs to check; absent means the built-in catalog.
    #[serde(default)]
    pub pairs: Option<Vec<SuitePair>>,
    /// Random sub-mean-value trials per sample; 0 skips the check.
    #[serde(default)]
    pub sub_mean_trials: usize,
}

/// Reading or validating a scenario failed; maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl SchemaError {
    fn new(path: &Path, message: impl Into<String>) -> Self {
        Self {
            path: path.display().to_string(),
            message: message.into(),
        }
    }
}

pub fn load(path: &Path) -> Result<Scenario, SchemaError> {
    let text = fs::read_to_string(path).map_err(|e| SchemaError::new(path, e.to_string()))?;
    parse(&text).map_err(|m| SchemaError::new(path, m))
}

/// Parses and validates a scenario; errors name the JSON path of the offending field.
pub fn parse(text: &str) -> Result<Scenario, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        format!("at `{}` (line {}, column {}): {inner}", e.path(), inner.line(), inner.column())
    })?;
    sc.validate()?;
    Ok(sc)
}

impl Scenario {
    pub fn validate(&self) -> Result<(), String> {
        if self.schema != SCHEMA_VERSION {
            return Err(format!("at `schema`: unsupported version {}, expected {SCHEMA_VERSION}", self.schema));
        }
        if !(1..=2).contains(&self.n) {
            return Err(format!("at `n`: dimension must be 1 or 2, found {}", self.n));
        }
        self.search.validate().map_err(|e| format!("at `search`: {e}"))?;
        self.relax.validate().map_err(|e| format!("at `relax`: {e}"))?;
        let dim = |what: &str, found: usize| {
            if found == self.n {
                Ok(())
            } else {
                Err(format!("at `{what}`: dimension {found} does not match n = {}", self.n))
            }
        };
        let domain_dim = |what: &str, d: &Domain| -> Result<(), String> {
            let k = d.dim().map_err(|e| format!("at `{what}`: {e}"))?;
            dim(what, k)
        };
        let grid_dim = |what: &str, g: &GridSpec| -> Result<(), String> {
            g.validate().map_err(|e| format!("at `{what}`: {e}"))?;
            dim(what, g.bounds.len() / 2)
        };
        match &self.task {
            Task::Envelope(t) => {
                dim("task.objective", t.objective.dim())?;
                if t.probes.is_empty() {
                    return Err("at `task.probes`: at least one probe is required".into());
                }
                for (i, p) in t.probes.iter().enumerate() {
                    dim(&format!("task.probes[{i}]"), p.dim())?;
                }
                if let Some(g) = &t.grid {
                    grid_dim("task.grid", g)?;
                }
                if t.grid.is_some() && t.radial_nodes.is_some() {
                    return Err("at `task`: `grid` and `radial_nodes` are mutually exclusive".into());
                }
                if t.engine != EngineChoice::Disc && t.grid.is_none() && t.radial_nodes.is_none() {
                    return Err("at `task`: the Perron engine needs `grid` or `radial_nodes`".into());
                }
                if !(t.sandwich_tolerance >= 0.0) {
                    return Err("at `task.sandwich_tolerance`: must be nonnegative".into());
                }
                if let Some(r) = &t.reference {
                    if r.expr.required_dim() > self.n || !(r.tolerance >= 0.0) {
                        return Err("at `task.reference`: invalid dimension or tolerance".into());
                    }
                }
            }
            Task::Thinness(t) => {
                domain_dim("task.set", &t.set)?;
                dim("task.x", t.x.dim())?;
                if t.oracle_resolution < 8 || t.oracle_resolution % 2 != 0 {
                    return Err("at `task.oracle_resolution`: must be even and at least 8".into());
                }
                pluridisc::thinness::ThinnessQuery::new(t.set.clone(), t.x, t.v_radius, t.epsilon)
                    .map_err(|e| format!("at `task`: {e}"))?;
            }
            Task::MaxPrinciple(t) => {
                domain_dim("task.X", &t.x)?;
                grid_dim("task.grid", &t.grid)?;
                if t.boundary_k == 0 {
                    return Err("at `task.boundary_k`: must be positive".into());
                }
                if let Some(pairs) = &t.pairs {
                    for (i, p) in pairs.iter().enumerate() {
                        domain_dim(&format!("task.pairs[{i}].set"), &p.set)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Search configuration with the effective seed applied.
    pub fn search_config(&self, seed_override: Option<u64>) -> SearchConfig {
        let mut cfg = self.search.clone();
        cfg.seed = seed_override.unwrap_or(self.seed);
        cfg
    }

    pub fn seed(&self, seed_override: Option<u64>) -> u64 {
        seed_override.unwrap_or(self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const JUMP: &str = r#"{
        "schema": 1, "name": "jump", "n": 1,
        "task": {
            "kind": "envelope",
            "objective": {
                "X": {"kind": "ball", "center": [[0, 0]], "radius": 1},
                "W": {"kind": "ball", "center": [[0, 0]], "radius": 0.5},
                "phi1": "2", "phi2": "-1", "boundary_values": "-1"
            },
            "grid": {"bounds": [[-1, 1], [-1, 1]], "resolution": [33, 33],
                     "restriction": {"kind": "ball", "center": [[0, 0]], "radius": 1}},
            "probes": [[[0, 0]], [[0.75, 0]]]
        }
    }"#;

    #[test]
    fn parses_envelope_scenario_with_defaults() {
        let sc = parse(JUMP).unwrap();
        assert_eq!(sc.seed, 0);
        assert_eq!(sc.search, SearchConfig::default());
        match &sc.task {
            Task::Envelope(t) => {
                assert_eq!(t.engine, EngineChoice::Both);
                assert_eq!(t.sandwich_tolerance, 0.02);
                assert_eq!(t.probes.len(), 2);
            }
            other => panic!("unexpected task {}", other.kind()),
        }
    }

    #[test]
    fn seed_override_wins() {
        let sc = parse(JUMP).unwrap();
        assert_eq!(sc.search_config(None).seed, 0);
        assert_eq!(sc.search_config(Some(7)).seed, 7);
    }

    #[test]
    fn unknown_field_names_its_path() {
        let bad = JUMP.replace("\"probes\"", "\"probez\"");
        let e = parse(&bad).unwrap_err();
        assert!(e.contains("task"), "{e}");
    }

    #[test]
    fn wrong_probe_dimension_is_rejected() {
        let bad = JUMP.replace("[[0.75, 0]]", "[[0.75, 0], [0, 0]]");
        let e = parse(&bad).unwrap_err();
        assert!(e.contains("task.probes[1]"), "{e}");
    }

    #[test]
    fn invalid_objective_is_a_schema_error() {
        let bad = JUMP.replace("\"radius\": 0.5", "\"radius\": 1.5");
        assert!(parse(&bad).is_err());
    }

    #[test]
    fn perron_engine_needs_a_grid() {
        let v: serde_json::Value = serde_json::from_str(JUMP).unwrap();
        let mut v = v;
        v["task"].as_object_mut().unwrap().remove("grid");
        let e = parse(&v.to_string()).unwrap_err();
        assert!(e.contains("grid"), "{e}");
        v["task"]["engine"] = "disc".into();
        assert!(parse(&v.to_string()).is_ok());
    }

    #[test]
    fn wrong_schema_version() {
        let bad = JUMP.replace("\"schema\": 1", "\"schema\": 2");
        assert!(parse(&bad).unwrap_err().contains("schema"));
    }
}
