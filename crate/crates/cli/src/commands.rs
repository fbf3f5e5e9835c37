//! Scenario runners. Every numeric output is a CSV starting with `# schema=1`;
//! wall-clock timings go to `timing.log` only.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pluridisc::envelope::{eh_estimate, SearchResult, SearchStatus};
use pluridisc::ext::format as fmt_ext;
use pluridisc::max_principle::{builtin_catalog, run_suite, sub_mean_test};
use pluridisc::perron::{psh_envelope, psh_envelope_radial, RelaxSummary};
use pluridisc::thinness::{thinness_report, verdict_name, ThinnessQuery};
use pluridisc::Point;
use rayon::prelude::*;

use crate::scenario::{self, EngineChoice, EnvelopeTask, MaxPrincipleTask, Scenario, Task, ThinnessTask};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_ENGINE: i32 = 3;

const SUMMARY_HEADER: &str = "# schema=1\nfile,name,kind,status,exit_code,detail\n";

/// Result of one scenario run, one row of the summary table.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub file: String,
    pub name: String,
    pub kind: String,
    pub code: i32,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn status(&self) -> &'static str {
        match self.code {
            EXIT_PASS => "pass",
            EXIT_FAIL => "fail",
            EXIT_SCHEMA => "schema_error",
            _ => "engine_error",
        }
    }

    fn row(&self) -> String {
        format!(
            "{},{},{},{},{},{}\n",
            self.file,
            self.name,
            self.kind,
            self.status(),
            self.code,
            self.detail.replace([',', '\n'], ";")
        )
    }
}

pub fn summary_csv(outcomes: &[Outcome]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    for o in outcomes {
        s.push_str(&o.row());
    }
    s
}

pub fn timing_log(outcomes: &[Outcome]) -> String {
    let mut s = String::new();
    for o in outcomes {
        let _ = writeln!(s, "{}\t{:.3}s", o.file, o.seconds);
    }
    s
}

/// Which command invoked the runner; single-task commands reject other kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expect {
    Envelope(Option<EngineChoice>),
    Thinness,
    MaxPrinciple,
    Any,
}

/// Loads and runs one scenario, writing its outputs into `out`.
pub fn run_file(path: &Path, expect: Expect, seed: Option<u64>, out: &Path) -> Outcome {
    let start = Instant::now();
    let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let mut outcome = Outcome {
        file,
        name: "-".into(),
        kind: "-".into(),
        code: EXIT_SCHEMA,
        detail: String::new(),
        seconds: 0.0,
    };
    let sc = match scenario::load(path) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("error: {e}");
            outcome.detail = e.message;
            return outcome;
        }
    };
    outcome.name = sc.name.replace([',', '\n'], ";");
    outcome.kind = sc.task.kind().into();
    let result = match (&sc.task, expect) {
        (Task::Envelope(t), Expect::Envelope(engine)) => run_envelope(&sc, t, engine.unwrap_or(t.engine), seed, out),
        (Task::Envelope(t), Expect::Any) => run_envelope(&sc, t, t.engine, seed, out),
        (Task::Thinness(t), Expect::Thinness | Expect::Any) => run_thinness(&sc, t, seed, out),
        (Task::MaxPrinciple(t), Expect::MaxPrinciple | Expect::Any) => run_max_principle(&sc, t, seed, out),
        (task, _) => {
            let msg = format!("at `task.kind`: scenario is `{}`, not accepted by this command", task.kind());
            eprintln!("error: {}: {msg}", path.display());
            outcome.detail = msg;
            return outcome;
        }
    };
    match result {
        Ok((pass, detail)) => {
            outcome.code = if pass { EXIT_PASS } else { EXIT_FAIL };
            outcome.detail = detail;
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            outcome.code = EXIT_ENGINE;
            outcome.detail = e;
        }
    }
    outcome.seconds = start.elapsed().as_secs_f64();
    outcome
}

/// Runs every `*.json` file of `dir` (sorted by file name) on a pool of `jobs`
/// threads, each into `out/<file stem>`.
pub fn run_suite_dir(dir: &Path, out: &Path, jobs: usize, seed: Option<u64>) -> Result<Vec<Outcome>, String> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| e.to_string())?;
    let outcomes = pool.install(|| {
        files
            .par_iter()
            .map(|f| {
                let stem = f.file_stem().unwrap_or_default();
                run_file(f, Expect::Any, seed, &out.join(stem))
            })
            .collect()
    });
    Ok(outcomes)
}

type RunResult = Result<(bool, String), String>;

fn write(out: &Path, name: &str, body: &str) -> Result<(), String> {
    fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    let p = out.join(name);
    fs::write(&p, body).map_err(|e| format!("{}: {e}", p.display()))
}

fn coords(p: &Point) -> String {
    let c = p.coords();
    let z2 = c.get(1).map_or(",".to_string(), |z| format!("{:?},{:?}", z.re, z.im));
    format!("{:?},{:?},{z2}", c[0].re, c[0].im)
}

const COORDS: &str = "re_z1,im_z1,re_z2,im_z2";

fn relax_csv(s: &RelaxSummary) -> String {
    format!(
        "# schema=1\nsweeps,residual,converged,interior_nodes\n{},{},{},{}\n",
        s.sweeps,
        fmt_ext(s.residual),
        s.converged,
        s.interior_nodes
    )
}

fn run_envelope(sc: &Scenario, t: &EnvelopeTask, engine: EngineChoice, seed: Option<u64>, out: &Path) -> RunResult {
    let obj = &t.objective;
    let err = |e: pluridisc::Error| e.to_string();
    let mut pass = true;

    let disc: Option<Vec<SearchResult>> = if engine == EngineChoice::Perron {
        None
    } else {
        let cfg = sc.search_config(seed);
        let results = t.probes.iter().map(|p| eh_estimate(obj, p, &cfg)).collect::<Result<Vec<_>, _>>().map_err(err)?;
        let mut csv = format!("# schema=1\nprobe,{COORDS},value,status,degree,feasible,infeasible\n");
        let mut trace = String::from("# schema=1\nprobe,degree,best_value,evals\n");
        for (i, (p, r)) in t.probes.iter().zip(&results).enumerate() {
            let status = match r.status {
                SearchStatus::Found => "found",
                SearchStatus::CoverageFailure { .. } => "coverage_failure",
            };
            let _ = writeln!(
                csv,
                "{i},{},{},{status},{},{},{}",
                coords(p),
                fmt_ext(r.value),
                r.best_disc.degree(),
                r.feasible_count,
                r.infeasible_count
            );
            for d in &r.per_degree {
                let _ = writeln!(trace, "{i},{},{},{}", d.degree, fmt_ext(d.best_value), d.evals);
            }
        }
        write(out, "disc.csv", &csv)?;
        write(out, "disc_trace.csv", &trace)?;
        Some(results)
    };

    let perron: Option<Vec<f64>> = if engine == EngineChoice::Disc {
        None
    } else {
        let values = if let Some(grid) = &t.grid {
            let env = psh_envelope(obj, grid, &sc.relax).map_err(err)?;
            write(out, "perron_grid.csv", &env.to_csv())?;
            write(out, "perron_relax.csv", &relax_csv(&env.summary()))?;
            t.probes
                .iter()
                .map(|p| env.evaluate(obj, p).ok_or_else(|| format!("probe {p:?} lies outside the Perron grid")))
                .collect::<Result<Vec<_>, _>>()?
        } else {
            let nodes = t.radial_nodes.expect("validated");
            let env = psh_envelope_radial(obj, nodes, &sc.relax).map_err(err)?;
            write(out, "perron_radial.csv", &env.to_csv())?;
            write(out, "perron_relax.csv", &relax_csv(&env.summary()))?;
            t.probes
                .iter()
                .map(|p| env.value_at(p).ok_or_else(|| format!("probe {p:?} lies outside the radial grid")))
                .collect::<Result<Vec<_>, _>>()?
        };
        let mut csv = format!("# schema=1\nprobe,{COORDS},value\n");
        for (i, (p, v)) in t.probes.iter().zip(&values).enumerate() {
            let _ = writeln!(csv, "{i},{},{}", coords(p), fmt_ext(*v));
        }
        write(out, "perron.csv", &csv)?;
        Some(values)
    };

    let mut detail = format!("engine={engine:?} probes={}", t.probes.len()).to_lowercase();

    if let (Some(d), Some(p)) = (&disc, &perron) {
        let mut csv = format!("# schema=1\nprobe,{COORDS},perron,disc,lower,pass\n");
        let mut violations = 0;
        let mut worst = f64::INFINITY;
        for (i, probe) in t.probes.iter().enumerate() {
            let lower = p[i] - t.sandwich_tolerance;
            let ok = d[i].value >= lower;
            worst = worst.min(d[i].value - lower);
            violations += usize::from(!ok);
            let _ = writeln!(
                csv,
                "{i},{},{},{},{},{ok}",
                coords(probe),
                fmt_ext(p[i]),
                fmt_ext(d[i].value),
                fmt_ext(lower)
            );
        }
        write(out, "sandwich.csv", &csv)?;
        pass &= violations == 0;
        let _ = write!(detail, " sandwich_violations={violations} min_slack={}", fmt_ext(worst));
    }

    if let Some(r) = &t.reference {
        let mut csv = format!("# schema=1\nprobe,{COORDS},engine,value,reference,pass\n");
        let mut failures = 0;
        for (i, probe) in t.probes.iter().enumerate() {
            let reference = r.expr.eval(probe).map_err(err)?;
            if let Some(p) = &perron {
                let ok = (p[i] - reference).abs() <= r.tolerance || p[i] == reference;
                failures += usize::from(!ok);
                let _ = writeln!(csv, "{i},{},perron,{},{},{ok}", coords(probe), fmt_ext(p[i]), fmt_ext(reference));
            }
            if let Some(d) = &disc {
                let ok = d[i].value >= reference - r.tolerance;
                failures += usize::from(!ok);
                let _ = writeln!(
                    csv,
                    "{i},{},disc,{},{},{ok}",
                    coords(probe),
                    fmt_ext(d[i].value),
                    fmt_ext(reference)
                );
            }
        }
        write(out, "reference.csv", &csv)?;
        pass &= failures == 0;
        let _ = write!(detail, " reference_failures={failures}");
    }
    Ok((pass, detail))
}

fn run_thinness(sc: &Scenario, t: &ThinnessTask, seed: Option<u64>, out: &Path) -> RunResult {
    let err = |e: pluridisc::Error| e.to_string();
    let q = ThinnessQuery::new(t.set.clone(), t.x, t.v_radius, t.epsilon).map_err(err)?;
    let report = thinness_report(&q, &sc.search_config(seed), t.oracle_resolution, &sc.relax).map_err(err)?;
    write(out, "thinness.csv", &report.to_csv())?;
    let mut per_degree = String::from("# schema=1\ndegree,best_measure\n");
    for d in &report.per_degree {
        let _ = writeln!(per_degree, "{},{:?}", d.degree, d.best_measure);
    }
    write(out, "per_degree.csv", &per_degree)?;
    let mut cert = String::from("# schema=1\ncoordinate,power,re,im\n");
    if let Some(c) = &report.certificate {
        let center = c.disc.center();
        for (j, z) in center.coords().iter().enumerate() {
            let _ = writeln!(cert, "{j},0,{:?},{:?}", z.re, z.im);
        }
        for (j, row) in c.disc.coeffs().iter().enumerate() {
            for (k, a) in row.iter().enumerate() {
                let _ = writeln!(cert, "{j},{},{:?},{:?}", k + 1, a.re, a.im);
            }
        }
    }
    write(out, "certificate.csv", &cert)?;
    let pass = report.verdict == t.expected_verdict;
    let detail = format!(
        "verdict={} expected={} best_measure={:?} oracle={}",
        verdict_name(report.verdict),
        verdict_name(t.expected_verdict),
        report.best_measure,
        fmt_ext(report.oracle_value)
    );
    Ok((pass, detail))
}

fn run_max_principle(sc: &Scenario, t: &MaxPrincipleTask, seed: Option<u64>, out: &Path) -> RunResult {
    let pairs = t.pairs.clone().unwrap_or_else(builtin_catalog);
    let table = run_suite(&pairs, &t.x, &t.grid, t.boundary_k);
    write(out, "max_principle.csv", &table.to_csv())?;
    let errors: Vec<String> = table
        .rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("{}/{}: {e}", r.sample, r.set)))
        .collect();
    let mut pass = table.passed;
    let failed = table.rows.iter().filter(|r| !r.pass).count();
    let mut detail = format!("pairs={} failed={failed}", table.rows.len());
    if !errors.is_empty() {
        let _ = write!(detail, " errors=[{}]", errors.join("; "));
    }
    if t.sub_mean_trials > 0 {
        let mut csv = String::from("# schema=1\nsample,trials,worst_excess,pass\n");
        let mut seen = Vec::new();
        let mut bad = 0;
        for p in &pairs {
            if seen.contains(&p.sample.name) {
                continue;
            }
            seen.push(p.sample.name.clone());
            let c = sub_mean_test(&p.sample, &t.x, t.sub_mean_trials, sc.seed(seed)).map_err(|e| e.to_string())?;
            bad += usize::from(!c.passes());
            let _ = writeln!(csv, "{},{},{},{}", p.sample.name, c.trials, fmt_ext(c.worst_excess), c.passes());
        }
        write(out, "sub_mean.csv", &csv)?;
        pass &= bad == 0;
        let _ = write!(detail, " sub_mean_failures={bad}");
    }
    Ok((pass, detail))
}
