//! Derivative-free minimization of the Poisson disc functional over polynomial
//! discs with prescribed center: upper estimates of the disc envelope `EH(x)`,
//! its restriction `F(x)` to discs whose boundary lies in `W` or in `X` minus the
//! closure of `W`, and covering-disc search.
//!
//! Each restart runs Nelder–Mead in one of two charts:
//!
//! * direct: the real and imaginary parts of the coefficients of `z^1..z^d`;
//! * lifted about an anchor `c`: `f = c + (x - c) * T_d[exp(g)]` with
//!   `g(z) = b_1 z + ... + b_d z^d` and `T_d` the degree-`d` Taylor truncation.
//!
//! While `phi` jumps across the boundary of `W`, the search first minimizes a
//! blend `s phi2 + (1 - s) phi1` with `s = sigmoid(margin_W / tau)` and anneals
//! `tau` to zero. Reported values always come from the exact objective on discs
//! that pass strict classification, after shrinking `f(z)` to `f(rho z)` if needed.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::disc::{boundary_mean, classify_with, AnalyticDisc, CircleQuadrature, DiscClass, MU};
use crate::error::{Error, Result};
use crate::objective::{PiecewiseObjective, Region};
use crate::optim::{nelder_mead, SimplexOptions};
use crate::point::Point;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub degree_schedule: Vec<usize>,
    pub restarts: usize,
    pub max_evals: usize,
    pub seed: u64,
    pub penalty_weight: f64,
    /// Gaussian seed scale; `None` means `0.1 * margin_X(x)`.
    pub init_scale: Option<f64>,
    pub quadrature: usize,
    pub tolerance: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            degree_schedule: vec![1, 2, 4, 8, 16, 24],
            restarts: 20,
            max_evals: 5000,
            seed: 0,
            penalty_weight: 1e3,
            init_scale: None,
            quadrature: 1024,
            tolerance: 1e-7,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degree_schedule.is_empty()
            || self.degree_schedule.windows(2).any(|w| w[1] <= w[0])
            || self.degree_schedule[0] == 0
        {
            return Err(Error::InvalidArgument(
                "degree schedule must be nonempty, positive and increasing".into(),
            ));
        }
        if self.restarts == 0 || self.max_evals == 0 {
            return Err(Error::InvalidArgument("restarts and max_evals must be positive".into()));
        }
        if !(self.penalty_weight > 0.0) || !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("penalty weight and tolerance must be positive".into()));
        }
        if let Some(s) = self.init_scale {
            if !(s > 0.0) {
                return Err(Error::InvalidArgument("init_scale must be positive".into()));
            }
        }
        CircleQuadrature::new(self.quadrature)?;
        if 2 * self.degree_schedule.last().unwrap() >= self.quadrature {
            return Err(Error::InvalidArgument("degrees must stay below half the quadrature size".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeTrace {
    pub degree: usize,
    /// Best reported value over this and all earlier degrees.
    #[serde(with = "crate::ext")]
    pub best_value: f64,
    pub evals: usize,
}

/// One row per restart, for CSV traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub degree: usize,
    pub restart: usize,
    pub evals: usize,
    #[serde(with = "crate::ext")]
    pub best_value: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SearchStatus {
    Found,
    /// No admissible disc was found; carries the best boundary margin reached.
    CoverageFailure {
        #[serde(with = "crate::ext")]
        best_margin: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Best reported value; `+inf` on coverage failure.
    #[serde(with = "crate::ext")]
    pub value: f64,
    pub best_disc: AnalyticDisc,
    pub class: Option<DiscClass>,
    pub status: SearchStatus,
    pub per_degree: Vec<DegreeTrace>,
    pub restarts: Vec<RestartTrace>,
    pub feasible_count: usize,
    pub infeasible_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    /// All feasible discs.
    All,
    /// Discs labeled B1 or B2.
    Covering,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Chart {
    Direct,
    /// Index into the engine's anchor list.
    Lifted(usize),
}

/// Upper estimate of `EH(x)` over feasible discs with `f(0) = x`.
pub fn eh_estimate(obj: &PiecewiseObjective, x: &Point, cfg: &SearchConfig) -> Result<SearchResult> {
    Engine::new(obj, x, cfg, Mode::All)?.run(None)
}

/// Upper estimate of `F(x)` over B1/B2 discs with `f(0) = x`.
pub fn f_estimate(obj: &PiecewiseObjective, x: &Point, cfg: &SearchConfig) -> Result<SearchResult> {
    let engine = Engine::new(obj, x, cfg, Mode::Covering)?;
    match find_covering_disc(obj, x, cfg)? {
        Covering::Found { disc, .. } => engine.run(Some(disc)),
        Covering::Failure { best_margin, best_disc } => Ok(SearchResult {
            value: f64::INFINITY,
            best_disc,
            class: None,
            status: SearchStatus::CoverageFailure { best_margin },
            per_degree: Vec::new(),
            restarts: Vec::new(),
            feasible_count: 0,
            infeasible_count: 0,
        }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Covering {
    Found { disc: AnalyticDisc, class: DiscClass },
    Failure {
        #[serde(with = "crate::ext")]
        best_margin: f64,
        best_disc: AnalyticDisc,
    },
}

/// Searches for a B1/B2 disc centered at `x`, trying constant discs, then
/// truncated Blaschke circles around the anchor of `W`, then margin ascent.
pub fn find_covering_disc(obj: &PiecewiseObjective, x: &Point, cfg: &SearchConfig) -> Result<Covering> {
    let engine = Engine::new(obj, x, cfg, Mode::Covering)?;
    let constant = AnalyticDisc::constant(*x);
    let class = classify_with(&constant, obj, &engine.probe);
    if class.label.in_b() {
        return Ok(Covering::Found { disc: constant, class });
    }
    let mut best = (class.boundary_margin().min(class.range_margin), constant);
    for &d in &cfg.degree_schedule {
        let mut seeds: Vec<AnalyticDisc> = engine.blaschke_seeds(d);
        if seeds.is_empty() {
            seeds.push(AnalyticDisc::constant(*x).padded(d));
        }
        let mut scored: Vec<(f64, AnalyticDisc)> = Vec::with_capacity(seeds.len());
        for f in seeds {
            let k = classify_with(&f, obj, &engine.probe);
            if k.label.in_b() {
                return Ok(Covering::Found { disc: f, class: k });
            }
            scored.push((k.boundary_margin().min(k.range_margin), f));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let start = best.1.padded(d);
        let from = if scored[0].0 >= best.0 { &scored[0].1 } else { &start };
        let x0 = direct_params(from);
        let opts = SimplexOptions {
            max_evals: cfg.max_evals,
            tolerance: cfg.tolerance,
            stall_evals: 10 * (x0.len() + 1),
        };
        let r = nelder_mead(
            |p| {
                let f = engine.decode(Chart::Direct, p, d);
                -engine.fast_margins(&f).min_class()
            },
            &x0,
            engine.init_scale,
            opts,
        );
        let f = engine.decode(Chart::Direct, &r.x, d);
        let k = classify_with(&f, obj, &engine.probe);
        if k.label.in_b() {
            return Ok(Covering::Found { disc: f, class: k });
        }
        let m = k.boundary_margin().min(k.range_margin);
        if m > best.0 {
            best = (m, f);
        }
        for (m, f) in scored {
            if m > best.0 {
                best = (m, f);
            }
        }
    }
    Ok(Covering::Failure {
        best_margin: best.0,
        best_disc: best.1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UscProbe {
    /// `F` estimates in input order; the last point is the limit.
    pub values: Vec<ProbeValue>,
    #[serde(with = "crate::ext")]
    pub defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeValue {
    pub point: Point,
    #[serde(with = "crate::ext")]
    pub value: f64,
}

/// Evaluates `F` along a sequence whose last point is its limit and reports
/// `max(0, limsup - F(limit))`, with the limsup taken over the later half of
/// the sequence.
pub fn usc_probe(obj: &PiecewiseObjective, points: &[Point], cfg: &SearchConfig) -> Result<UscProbe> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("a probe sequence needs at least two points".into()));
    }
    let mut values = Vec::with_capacity(points.len());
    for p in points {
        values.push(ProbeValue {
            point: *p,
            value: f_estimate(obj, p, cfg)?.value,
        });
    }
    let (limit, seq) = values.split_last().unwrap();
    let tail = &seq[seq.len() / 2..];
    let limsup = tail.iter().map(|v| v.value).fold(f64::NEG_INFINITY, f64::max);
    let defect = if limsup == f64::NEG_INFINITY || limsup <= limit.value {
        0.0
    } else {
        limsup - limit.value
    };
    Ok(UscProbe { values, defect })
}

/// Margins of a disc sampled at the search quadrature.
#[derive(Clone, Copy, Debug)]
struct FastMargins {
    range: f64,
    inner: f64,
    outer: f64,
}

impl FastMargins {
    fn min_class(&self) -> f64 {
        self.range.min(self.inner.max(self.outer))
    }
}

/// Best strict candidate of one restart.
#[derive(Clone, Debug)]
struct Candidate {
    value: f64,
    disc: AnalyticDisc,
    class: DiscClass,
}

struct RestartOutcome {
    best: Option<Candidate>,
    evals: usize,
    /// Final parameters and chart, for carrying lifted incumbents forward.
    params: Vec<f64>,
    chart: Chart,
    infeasible: usize,
}

struct Engine<'a> {
    obj: &'a PiecewiseObjective,
    x: Point,
    cfg: &'a SearchConfig,
    mode: Mode,
    q: CircleQuadrature,
    probe: CircleQuadrature,
    inner_q: CircleQuadrature,
    mu_search: f64,
    init_scale: f64,
    taus: Vec<f64>,
    anchors: Vec<Point>,
    superharmonic: bool,
    lower_bound: Option<f64>,
    fft: Arc<dyn Fft<f64>>,
}

const DILATIONS: [f64; 10] = [1.0, 0.999, 0.995, 0.99, 0.98, 0.96, 0.93, 0.9, 0.85, 0.8];

impl<'a> Engine<'a> {
    fn new(obj: &'a PiecewiseObjective, x: &Point, cfg: &'a SearchConfig, mode: Mode) -> Result<Self> {
        cfg.validate()?;
        x.check_dim(obj.dim())?;
        if !obj.x().contains_unchecked(x) {
            return Err(Error::OutsideDomain(format!("X at {x:?}")));
        }
        let margin = obj.x().margin_unchecked(x);
        let scale = obj.x().extent();
        // Boundaries of B1/B2 discs never cross the boundary of W, so the exact
        // objective is already continuous along admissible discs.
        let taus = if obj.is_glued() || mode == Mode::Covering {
            vec![0.0]
        } else {
            [0.05, 0.02, 0.01, 0.005, 0.002, 0.0].iter().map(|t| t * scale).collect()
        };
        let mut anchors = Vec::new();
        for c in [obj.w().anchor(), obj.x().anchor()] {
            if c.dist(x) > 1e-9 * scale && !anchors.iter().any(|a: &Point| a.dist(&c) < 1e-12) {
                anchors.push(c);
            }
        }
        Ok(Self {
            obj,
            x: *x,
            cfg,
            mode,
            q: CircleQuadrature::new(cfg.quadrature)?,
            probe: CircleQuadrature::with_nodes(cfg.quadrature.max(1024)),
            inner_q: CircleQuadrature::with_nodes(cfg.quadrature / 4),
            mu_search: MU.max(0.005 * margin),
            init_scale: cfg.init_scale.unwrap_or(0.1 * margin),
            taus,
            anchors,
            superharmonic: obj.x().margin_is_superharmonic(),
            lower_bound: obj.constant_lower_bound(),
            fft: FftPlanner::new().plan_fft_inverse(cfg.quadrature),
        })
    }

    fn n(&self) -> usize {
        self.x.dim()
    }

    fn chart_len(&self, chart: Chart, d: usize) -> usize {
        match chart {
            Chart::Direct => 2 * self.n() * d,
            Chart::Lifted(_) => 2 * d,
        }
    }

    fn decode(&self, chart: Chart, p: &[f64], d: usize) -> AnalyticDisc {
        let n = self.n();
        match chart {
            Chart::Direct => {
                let coeffs = (0..n)
                    .map(|j| (0..d).map(|k| Complex64::new(p[2 * (j * d + k)], p[2 * (j * d + k) + 1])).collect())
                    .collect();
                AnalyticDisc::new(self.x, coeffs).expect("consistent shape")
            }
            Chart::Lifted(a) => {
                let c = self.anchors[a];
                let b: Vec<Complex64> = (0..d).map(|k| Complex64::new(p[2 * k], p[2 * k + 1])).collect();
                let e = exp_series(&b, d);
                let v = self.x - c;
                let coeffs = (0..n).map(|j| e[1..].iter().map(|em| v.coord(j) * em).collect()).collect();
                AnalyticDisc::new(self.x, coeffs).expect("consistent shape")
            }
        }
    }

    /// `f` at the search quadrature nodes, by one inverse FFT per coordinate.
    fn boundary(&self, f: &AnalyticDisc) -> Vec<Point> {
        let m = self.q.len();
        let c = f.center();
        let mut cols: [Vec<Complex64>; 2] = [Vec::new(), Vec::new()];
        for (j, coeffs) in f.coeffs().iter().enumerate() {
            let mut buf = vec![Complex64::new(0.0, 0.0); m];
            buf[1..=coeffs.len()].copy_from_slice(coeffs);
            self.fft.process(&mut buf);
            cols[j] = buf;
        }
        (0..m)
            .map(|k| {
                if self.n() == 1 {
                    Point::c1(c.coord(0) + cols[0][k])
                } else {
                    Point::c2(c.coord(0) + cols[0][k], c.coord(1) + cols[1][k])
                }
            })
            .collect()
    }

    fn fast_margins(&self, f: &AnalyticDisc) -> FastMargins {
        let (x, w) = (self.obj.x(), self.obj.w());
        let mut m = FastMargins {
            range: f64::INFINITY,
            inner: f64::INFINITY,
            outer: f64::INFINITY,
        };
        for p in self.boundary(f) {
            let mx = x.margin_unchecked(&p);
            let mw = w.margin_unchecked(&p);
            m.range = m.range.min(mx);
            m.inner = m.inner.min(mw);
            m.outer = m.outer.min(mx.min(-mw));
        }
        if !self.superharmonic {
            m.range = m.range.min(self.inner_range(f));
        }
        m
    }

    fn inner_range(&self, f: &AnalyticDisc) -> f64 {
        let x = self.obj.x();
        let mut m = f64::INFINITY;
        for r in [0.75, 0.5, 0.25] {
            for z in self.inner_q.nodes() {
                m = m.min(x.margin_unchecked(&f.eval_unchecked(z * r)));
            }
        }
        m
    }

    /// Penalized, possibly smoothed functional minimized by the simplex search.
    fn score(&self, f: &AnalyticDisc, tau: f64) -> f64 {
        let (x, w) = (self.obj.x(), self.obj.w());
        let mut sum = 0.0;
        let mut range = f64::INFINITY;
        let mut inner = f64::INFINITY;
        let mut outer = f64::INFINITY;
        for p in self.boundary(f) {
            let mx = x.margin_unchecked(&p);
            let mw = w.margin_unchecked(&p);
            range = range.min(mx);
            if self.mode == Mode::Covering {
                inner = inner.min(mw);
                outer = outer.min(mx.min(-mw));
            }
            let v = if tau > 0.0 {
                self.blend(&p, mw, tau)
            } else {
                self.obj.eval_phi_with_margin(&p, mw)
            };
            match v {
                Ok(v) => sum += v,
                Err(_) => return f64::INFINITY,
            }
        }
        if !self.superharmonic {
            range = range.min(self.inner_range(f));
        }
        let mut gap = (self.mu_search - range).max(0.0).powi(2);
        if self.mode == Mode::Covering {
            gap += (self.mu_search - inner.max(outer)).max(0.0).powi(2);
        }
        let mean = sum * self.q.weight();
        let penalty = self.cfg.penalty_weight * gap;
        if penalty > 0.0 && mean == f64::NEG_INFINITY {
            // Keep infeasible -inf discs below every finite value but ordered by violation.
            return -1e6 + penalty;
        }
        mean + penalty
    }

    fn blend(&self, p: &Point, mw: f64, tau: f64) -> Result<f64> {
        let s = 1.0 / (1.0 + (-mw / tau).exp());
        if s == 0.0 {
            return self.obj.phi1().eval(p);
        }
        if s == 1.0 {
            return self.obj.phi2().eval(p);
        }
        let (a, b) = match (self.obj.phi2().eval(p), self.obj.phi1().eval(p)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return self.obj.eval_phi_in_x(p),
        };
        if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
            Ok(f64::NEG_INFINITY)
        } else {
            Ok(s * a + (1.0 - s) * b)
        }
    }

    fn admissible(&self, class: &DiscClass) -> bool {
        match self.mode {
            Mode::All => class.label.is_feasible(),
            Mode::Covering => class.label.in_b(),
        }
    }

    /// Strict classification and exact value, shrinking `f(z)` to `f(rho z)` if needed.
    fn strict(&self, f: &AnalyticDisc) -> Option<Candidate> {
        for rho in DILATIONS {
            let g = if rho == 1.0 { f.clone() } else { f.dilate(rho) };
            let class = classify_with(&g, self.obj, &self.probe);
            if self.admissible(&class) {
                let value = boundary_mean(&g, self.obj, &self.q).ok()?;
                return Some(Candidate { value, disc: g, class });
            }
            if class.range_margin < -0.5 * self.obj.x().extent() {
                return None;
            }
        }
        None
    }

    fn reached_bound(&self, v: f64) -> bool {
        v == f64::NEG_INFINITY || self.lower_bound.is_some_and(|lo| v <= lo)
    }

    fn run(&self, seed_disc: Option<AnalyticDisc>) -> Result<SearchResult> {
        let mut best: Option<Candidate> = None;
        let mut feasible_count = 0;
        let mut infeasible_count = 0;
        let mut initial = vec![AnalyticDisc::constant(self.x)];
        initial.extend(seed_disc);
        for f in initial {
            match self.strict(&f) {
                Some(c) => {
                    feasible_count += 1;
                    if best.as_ref().is_none_or(|b| c.value < b.value) {
                        best = Some(c);
                    }
                }
                None => infeasible_count += 1,
            }
        }
        let mut per_degree = Vec::new();
        let mut restarts = Vec::new();
        let mut lifted: Option<(Chart, Vec<f64>, f64)> = None;

        for &d in &self.cfg.degree_schedule {
            if best.as_ref().is_some_and(|b| self.reached_bound(b.value)) {
                per_degree.push(DegreeTrace {
                    degree: d,
                    best_value: best.as_ref().unwrap().value,
                    evals: 0,
                });
                continue;
            }
            let strip = self.strip_seeds(d);
            let outcomes: Vec<RestartOutcome> = (0..self.cfg.restarts)
                .into_par_iter()
                .map(|r| self.restart(d, r, best.as_ref(), lifted.as_ref(), &strip))
                .collect();
            let mut evals = 0;
            for (r, o) in outcomes.into_iter().enumerate() {
                evals += o.evals;
                infeasible_count += o.infeasible;
                let value = o.best.as_ref().map_or(f64::INFINITY, |c| c.value);
                restarts.push(RestartTrace {
                    degree: d,
                    restart: r,
                    evals: o.evals,
                    best_value: value,
                    feasible: o.best.is_some(),
                });
                if let Some(c) = o.best {
                    feasible_count += 1;
                    if let Chart::Lifted(_) = o.chart {
                        if lifted.as_ref().is_none_or(|l| c.value < l.2) {
                            lifted = Some((o.chart, o.params.clone(), c.value));
                        }
                    }
                    if best.as_ref().is_none_or(|b| c.value < b.value) {
                        best = Some(c);
                    }
                }
            }
            per_degree.push(DegreeTrace {
                degree: d,
                best_value: best.as_ref().map_or(f64::INFINITY, |b| b.value),
                evals,
            });
        }
        let best = best.ok_or_else(|| Error::InfeasibleDisc("no admissible disc found".into()))?;
        Ok(SearchResult {
            value: best.value,
            best_disc: best.disc,
            class: Some(best.class),
            status: SearchStatus::Found,
            per_degree,
            restarts,
            feasible_count,
            infeasible_count,
        })
    }

    fn rng(&self, d: usize, r: usize) -> ChaCha8Rng {
        let mut s = self.cfg.seed ^ 0x9E37_79B9_7F4A_7C15;
        for v in [d as u64, r as u64] {
            s = splitmix(s ^ v);
        }
        ChaCha8Rng::seed_from_u64(s)
    }

    fn restart(
        &self,
        d: usize,
        r: usize,
        incumbent: Option<&Candidate>,
        lifted: Option<&(Chart, Vec<f64>, f64)>,
        strip: &[Vec<f64>],
    ) -> RestartOutcome {
        let mut rng = self.rng(d, r);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let has_lift = !self.anchors.is_empty();
        let incumbent_params = incumbent.map(|c| direct_params(&c.disc.padded(d)));
        let (chart, mut x0, step) = match r {
            0 => (
                Chart::Direct,
                incumbent_params.clone().unwrap_or_else(|| vec![0.0; self.chart_len(Chart::Direct, d)]),
                self.init_scale,
            ),
            1 if lifted.is_some() => {
                let (chart, p, _) = lifted.unwrap();
                let mut p = p.clone();
                p.resize(self.chart_len(*chart, d), 0.0);
                (*chart, p, self.lift_step())
            }
            r if r >= 2 && r - 2 < strip.len() => (Chart::Lifted(0), strip[r - 2].clone(), 0.25 * self.lift_step()),
            _ => {
                let chart = if has_lift && r % 2 == 1 {
                    Chart::Lifted(r / 2 % self.anchors.len())
                } else {
                    Chart::Direct
                };
                let len = self.chart_len(chart, d);
                let scale = match chart {
                    Chart::Direct => self.init_scale,
                    Chart::Lifted(_) => self.lift_step(),
                };
                let around_incumbent = chart == Chart::Direct && r % 4 == 0 && incumbent_params.is_some();
                let mut x0 = if around_incumbent {
                    incumbent_params.clone().unwrap()
                } else {
                    vec![0.0; len]
                };
                for v in x0.iter_mut() {
                    *v += scale * normal.sample(&mut rng);
                }
                (chart, x0, scale)
            }
        };
        let mut evals = 0;
        let mut infeasible = 0;
        let mut best: Option<Candidate> = None;
        let budget = (self.cfg.max_evals / self.taus.len()).max(1);
        for (phase, &tau) in self.taus.iter().enumerate() {
            let opts = SimplexOptions {
                max_evals: budget,
                tolerance: self.cfg.tolerance,
                stall_evals: 10 * (x0.len() + 1),
            };
            let res = nelder_mead(
                |p| self.score(&self.decode(chart, p, d), tau),
                &x0,
                step * 0.6f64.powi(phase as i32),
                opts,
            );
            evals += res.evals;
            x0 = res.x;
            match self.strict(&self.decode(chart, &x0, d)) {
                Some(c) => {
                    if best.as_ref().is_none_or(|b| c.value < b.value) {
                        best = Some(c);
                    }
                }
                None => infeasible += 1,
            }
            if best.as_ref().is_some_and(|b| self.reached_bound(b.value)) {
                break;
            }
        }
        RestartOutcome {
            best,
            evals,
            params: x0,
            chart,
            infeasible,
        }
    }

    fn lift_step(&self) -> f64 {
        let dx = self.anchors.first().map_or(1.0, |c| c.dist(&self.x));
        (self.init_scale / dx).min(0.5)
    }

    /// Lifted-chart parameters of conformal strip maps about the anchor of `W`.
    ///
    /// With `c` the anchor, `r_W` its distance to the boundary of `W` and
    /// `R = |x - c| + margin_X(x)`, `log((f - c)/(x - c))` is seeded with a
    /// dilated conformal map of the disc onto the strip
    /// `log(r_W / |x - c|) - deep < Re w < log(R / |x - c|) - shrink`, sending 0 to 0.
    /// Returns the best few by exact score at degree `d`.
    fn strip_seeds(&self, d: usize) -> Vec<Vec<f64>> {
        if self.mode != Mode::All || self.anchors.is_empty() || self.obj.region(&self.x) != Region::Outer {
            return Vec::new();
        }
        let c = self.anchors[0];
        let rw = self.obj.w().margin_unchecked(&c);
        let dx = c.dist(&self.x);
        let rx = dx + self.obj.x().margin_unchecked(&self.x);
        if !(rw > 0.0 && dx > rw) || c != self.obj.w().anchor() {
            return Vec::new();
        }
        let mut scored = Vec::new();
        for rho in [0.8, 0.9, 0.95, 0.97, 0.98, 0.985, 0.99] {
            for deep in [0.05, 0.1, 0.2] {
                for shrink in [0.005, 0.02] {
                    let a = (rx / dx).ln() - shrink;
                    let b = (rw / dx).ln() - deep;
                    if !(a > 0.0) {
                        continue;
                    }
                    let p = strip_params(a, b, rho, d);
                    let v = self.score(&self.decode(Chart::Lifted(0), &p, d), 0.0);
                    if v.is_finite() || v == f64::NEG_INFINITY {
                        scored.push((v, p));
                    }
                }
            }
        }
        scored.sort_by(|u, v| u.0.total_cmp(&v.0));
        scored.into_iter().take(4).map(|s| s.1).collect()
    }

    /// Truncated Blaschke circles `c + u R B_a(z)` through `x` around the
    /// anchor `c` of `W`, with `R` between the boundaries of `W` and `X`.
    fn blaschke_seeds(&self, d: usize) -> Vec<AnalyticDisc> {
        let c = self.obj.w().anchor();
        let rw = self.obj.w().margin_unchecked(&c);
        let dx = c.dist(&self.x);
        let rx = dx + self.obj.x().margin_unchecked(&self.x);
        if !(rw > 0.0 && rx > rw) {
            return Vec::new();
        }
        let u = if dx > 0.0 {
            (self.x - c) * (1.0 / dx)
        } else {
            let mut e = vec![Complex64::new(0.0, 0.0); self.n()];
            e[0] = Complex64::new(1.0, 0.0);
            Point::new(&e).expect("dimension 1 or 2")
        };
        let mut out = Vec::new();
        for t in [0.5, 0.35, 0.65, 0.2, 0.8] {
            let radius = rw + t * (rx - rw);
            if radius <= dx {
                continue;
            }
            let a = dx / radius;
            let coeffs = (0..self.n())
                .map(|j| {
                    let mut pow = 1.0;
                    (1..=d)
                        .map(|_| {
                            let ck = (1.0 - a * a) * pow;
                            pow *= -a;
                            u.coord(j) * radius * ck
                        })
                        .collect()
                })
                .collect();
            out.push(AnalyticDisc::new(self.x, coeffs).expect("consistent shape"));
        }
        out
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn direct_params(f: &AnalyticDisc) -> Vec<f64> {
    f.coeffs()
        .iter()
        .flat_map(|c| c.iter().flat_map(|z| [z.re, z.im]))
        .collect()
}

/// Taylor coefficients `e_0..e_d` of `exp(g)` for `g = sum_{k>=1} b_k z^k`.
pub(crate) fn exp_series(b: &[Complex64], d: usize) -> Vec<Complex64> {
    let mut e = vec![Complex64::new(0.0, 0.0); d + 1];
    e[0] = Complex64::new(1.0, 0.0);
    for m in 1..=d {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 1..=m.min(b.len()) {
            acc += b[k - 1] * e[m - k] * k as f64;
        }
        e[m] = acc / m as f64;
    }
    e
}

/// Coefficients of `g(rho z)`, where `g` maps the disc conformally onto the
/// strip `b < Re w < a` with `g(0) = 0`.
fn strip_params(a: f64, b: f64, rho: f64, d: usize) -> Vec<f64> {
    let s = (a - b) / PI;
    let t0 = 0.5 * (a + b);
    let p = Complex64::new(0.0, (-t0 / (2.0 * s)).tan());
    let one = Complex64::new(1.0, 0.0);
    let n = 256;
    let samples: Vec<Complex64> = (0..n)
        .map(|j| {
            let z = Complex64::from_polar(rho, 2.0 * PI * j as f64 / n as f64);
            let phi = (z + p) / (one + p.conj() * z);
            Complex64::new(0.0, -s) * ((one + phi) / (one - phi)).ln() + t0
        })
        .collect();
    let mut out = Vec::with_capacity(2 * d);
    for k in 1..=d {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, g) in samples.iter().enumerate() {
            acc += g * Complex64::from_polar(1.0, -2.0 * PI * (j * k % n) as f64 / n as f64);
        }
        acc /= n as f64;
        out.push(acc.re);
        out.push(acc.im);
    }
    out
}
