//! Thinness of a set at a point: constructive non-thinness certificates (discs
//! centered at the point whose boundary circle spends measure `> 1 - eps` in the
//! set) and thin evidence from the relative extremal function of the set.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disc::{boundary_measure, AnalyticDisc, CircleQuadrature, MU};
use crate::domain::{BallCloud, Domain, GridSpec};
use crate::envelope::SearchConfig;
use crate::error::{Error, Result};
use crate::optim::{nelder_mead, SimplexOptions};
use crate::perron::{relative_extremal, ObstacleSet, RelaxConfig};
use crate::point::Point;

/// Oracle values at least this far above `-1` count as thin evidence.
pub const THIN_MARGIN: f64 = 0.1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThinnessQuery {
    /// Open set `U`.
    pub set: Domain,
    pub x: Point,
    /// Radius of the neighborhood `V = ball(x, v_radius)`.
    pub v_radius: f64,
    pub epsilon: f64,
}

impl ThinnessQuery {
    pub fn new(set: Domain, x: Point, v_radius: f64, epsilon: f64) -> Result<Self> {
        let q = Self {
            set,
            x,
            v_radius,
            epsilon,
        };
        q.validate()?;
        Ok(q)
    }

    /// Checks the parameters and that `x` lies in the closure of `U \ {x}`.
    ///
    /// For an open set the closure of `U \ {x}` is the closure of `U`, which
    /// contains `x` exactly when the signed margin at `x` is not negative.
    pub fn validate(&self) -> Result<()> {
        let n = self.set.dim()?;
        self.x.check_dim(n)?;
        if !(self.v_radius > 0.0) || !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidArgument(
                "need v_radius > 0 and epsilon in (0, 1)".into(),
            ));
        }
        let m = self.set.margin_unchecked(&self.x);
        if !(m >= -1e-12 * (1.0 + self.v_radius)) {
            return Err(Error::Rejected(format!(
                "x = {:?} is not in the closure of the set (margin {m:e})",
                self.x
            )));
        }
        Ok(())
    }

    pub fn neighborhood(&self) -> Domain {
        Domain::ball(self.x, self.v_radius)
    }

    /// `U ∩ V`, the set whose boundary measure is maximized.
    pub fn target(&self) -> Domain {
        Domain::intersection(self.set.clone(), self.neighborhood())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub disc: AnalyticDisc,
    pub measure: f64,
    /// Measure recomputed with four times as many quadrature nodes.
    pub revalidated_measure: f64,
    /// `v_radius - max |f - x|` over the closed disc.
    pub v_margin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeMeasure {
    pub degree: usize,
    pub best_measure: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateSearch {
    pub certificate: Option<Certificate>,
    pub best_measure: f64,
    pub best_disc: AnalyticDisc,
    pub per_degree: Vec<DegreeMeasure>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// A certificate disc was found and revalidated.
    NonThin,
    /// No certificate at any scheduled degree and the oracle stays clear of `-1`.
    ThinEvidence,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThinnessReport {
    pub query: ThinnessQuery,
    pub certificate: Option<Certificate>,
    pub best_measure: f64,
    pub per_degree: Vec<DegreeMeasure>,
    /// `u_{U ∩ V1, V1}(x)` with `V1 = ball(x, v_radius / 2)`.
    pub oracle_value: f64,
    pub verdict: Verdict,
}

impl ThinnessReport {
    /// CSV of `(epsilon, best measure, oracle value)`.
    pub fn to_csv(&self) -> String {
        format!(
            "# schema=1\nepsilon,best_measure,oracle_value,verdict\n{:?},{:?},{},{}\n",
            self.query.epsilon,
            self.best_measure,
            crate::ext::format(self.oracle_value),
            verdict_name(self.verdict)
        )
    }
}

pub fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::NonThin => "non_thin",
        Verdict::ThinEvidence => "thin_evidence",
        Verdict::Inconclusive => "inconclusive",
    }
}

/// Disc evaluation on the quadrature circle with the exact measure and the
/// neighborhood margin.
struct Evaluator<'a> {
    q: &'a ThinnessQuery,
    target: Domain,
    quad: CircleQuadrature,
}

impl Evaluator<'_> {
    fn disc(&self, params: &[f64], degree: usize) -> AnalyticDisc {
        let n = self.q.x.dim();
        let coeffs = (0..n)
            .map(|j| {
                (0..degree)
                    .map(|k| {
                        let i = 2 * (j * degree + k);
                        Complex64::new(params[i], params[i + 1])
                    })
                    .collect()
            })
            .collect();
        AnalyticDisc::new(self.q.x, coeffs).expect("consistent shape")
    }

    /// `v_radius - max |f - x|` over the circle, which bounds the closed disc.
    fn v_margin(&self, f: &AnalyticDisc, quad: &CircleQuadrature) -> f64 {
        f.boundary_points(quad)
            .iter()
            .map(|p| self.q.v_radius - p.dist(&self.q.x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Negated smoothed measure plus a containment penalty.
    fn surrogate(&self, f: &AnalyticDisc, tau: f64) -> f64 {
        let pts = f.boundary_points(&self.quad);
        let mut hits = 0.0;
        let mut worst_v = f64::INFINITY;
        for p in &pts {
            worst_v = worst_v.min(self.q.v_radius - p.dist(&self.q.x));
            let m = self.target.margin_unchecked(p);
            hits += 1.0 / (1.0 + (-m / tau).exp());
        }
        let deficit = (2.0 * MU - worst_v).max(0.0) / self.q.v_radius;
        -hits / pts.len() as f64 + 10.0 * deficit
    }

    /// Exact node-level measure, or `None` when the disc leaves `V` by the margin.
    fn measure(&self, f: &AnalyticDisc) -> Option<f64> {
        (self.v_margin(f, &self.quad) >= MU).then(|| boundary_measure(f, &self.target, &self.quad))
    }

    fn certificate(&self, f: &AnalyticDisc, measure: f64) -> Option<Certificate> {
        let fine = CircleQuadrature::new(4 * self.quad.len()).ok()?;
        let v_margin = self.v_margin(f, &fine);
        let revalidated = boundary_measure(f, &self.target, &fine);
        let threshold = 1.0 - self.q.epsilon;
        (measure > threshold && revalidated > threshold && v_margin >= MU).then(|| Certificate {
            disc: f.clone(),
            measure,
            revalidated_measure: revalidated,
            v_margin,
        })
    }
}

/// Linear seeds `x + r e_j z` at several radii inside `V`.
fn linear_seeds(q: &ThinnessQuery) -> Vec<AnalyticDisc> {
    let n = q.x.dim();
    let mut out = Vec::new();
    for frac in [0.5, 0.25, 0.1, 0.05, 0.02] {
        let r = frac * q.v_radius;
        for j in 0..n {
            let mut coeffs = vec![vec![Complex64::new(0.0, 0.0)]; n];
            coeffs[j][0] = Complex64::new(r, 0.0);
            out.push(AnalyticDisc::new(q.x, coeffs).expect("consistent shape"));
        }
        if n == 2 {
            let s = r / 2f64.sqrt();
            out.push(AnalyticDisc::linear(q.x, Point::c2(Complex64::new(s, 0.0), Complex64::new(s, 0.0))));
        }
    }
    out
}

fn seed_for(seed: u64, degree: usize, restart: usize) -> u64 {
    let mut z = seed ^ (degree as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (restart as u64).rotate_left(32);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Searches discs `f(0) = x`, `f(closed disc) ⊂ V`, for boundary measure of
/// `U ∩ V` above `1 - epsilon`. Returns the first revalidated disc, or the best
/// measure reached across the degree schedule.
pub fn nonthin_certificate(q: &ThinnessQuery, cfg: &SearchConfig) -> Result<CertificateSearch> {
    q.validate()?;
    cfg.validate()?;
    let ev = Evaluator {
        q,
        target: q.target(),
        quad: CircleQuadrature::new(cfg.quadrature)?,
    };
    let n = q.x.dim();
    let mut best: Option<(f64, AnalyticDisc)> = None;
    let mut per_degree = Vec::new();
    let consider = |f: AnalyticDisc, best: &mut Option<(f64, AnalyticDisc)>| -> Option<Certificate> {
        let m = ev.measure(&f)?;
        if best.as_ref().is_none_or(|(b, _)| m > *b) {
            *best = Some((m, f.clone()));
        }
        ev.certificate(&f, m)
    };
    let done = |certificate: Certificate, best: Option<(f64, AnalyticDisc)>, per_degree| {
        let (best_measure, best_disc) = best.expect("certificate implies a measured disc");
        Ok(CertificateSearch {
            certificate: Some(certificate),
            best_measure,
            best_disc,
            per_degree,
        })
    };

    for f in linear_seeds(q) {
        if let Some(c) = consider(f, &mut best) {
            let degree = per_degree_entry(1, &best);
            return done(c, best, vec![degree]);
        }
    }

    let taus = [0.05, 0.01, 0.002].map(|t| t * q.v_radius);
    for &d in &cfg.degree_schedule {
        let dim = 2 * n * d;
        let incumbent = best.as_ref().map(|(_, f)| f.padded(d));
        let runs: Vec<AnalyticDisc> = (0..cfg.restarts)
            .into_par_iter()
            .map(|r| {
                let x0 = match (&incumbent, r) {
                    (Some(f), 0) => params_of(f),
                    _ => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed_for(cfg.seed, d, r));
                        let scale = cfg.init_scale.unwrap_or(0.3 * q.v_radius) / (d as f64).sqrt();
                        let normal = Normal::new(0.0, scale).expect("positive scale");
                        (0..dim).map(|_| normal.sample(&mut rng)).collect()
                    }
                };
                let mut x = x0;
                let step = 0.1 * q.v_radius / (d as f64).sqrt();
                for (phase, &tau) in taus.iter().enumerate() {
                    let opts = SimplexOptions {
                        max_evals: cfg.max_evals / taus.len(),
                        tolerance: cfg.tolerance,
                        stall_evals: 10 * (dim + 1),
                    };
                    let res = nelder_mead(
                        |p| ev.surrogate(&ev.disc(p, d), tau),
                        &x,
                        step * 0.6f64.powi(phase as i32),
                        opts,
                    );
                    x = res.x;
                }
                ev.disc(&x, d)
            })
            .collect();
        for f in runs {
            if let Some(c) = consider(f, &mut best) {
                per_degree.push(per_degree_entry(d, &best));
                return done(c, best, per_degree);
            }
        }
        per_degree.push(per_degree_entry(d, &best));
    }
    let (best_measure, best_disc) = best.unwrap_or_else(|| (0.0, AnalyticDisc::constant(q.x)));
    Ok(CertificateSearch {
        certificate: None,
        best_measure,
        best_disc,
        per_degree,
    })
}

fn per_degree_entry(degree: usize, best: &Option<(f64, AnalyticDisc)>) -> DegreeMeasure {
    DegreeMeasure {
        degree,
        best_measure: best.as_ref().map_or(0.0, |b| b.0),
    }
}

fn params_of(f: &AnalyticDisc) -> Vec<f64> {
    f.coeffs()
        .iter()
        .flat_map(|c| c.iter().flat_map(|z| [z.re, z.im]))
        .collect()
}

/// Grid for the oracle: the box around `V1 = ball(x, v_radius / 2)` with an
/// even node count per axis, so that `x` sits at a cell center rather than on
/// grid lines through `x` (a line of nodes would make sets thinner than the
/// grid, such as an exponential cusp, look like a segment).
pub fn oracle_grid(q: &ThinnessQuery, resolution: usize) -> Result<GridSpec> {
    let n = q.x.dim();
    let res = resolution + resolution % 2;
    if res < 8 {
        return Err(Error::InvalidArgument("oracle grid needs at least 8 nodes per axis".into()));
    }
    let r1 = 0.5 * q.v_radius;
    let bounds = (0..2 * n)
        .map(|a| {
            let c = q.x.real_coord(a);
            [c - r1, c + r1]
        })
        .collect();
    Ok(GridSpec::new(bounds, vec![res; 2 * n], Domain::ball(q.x, r1)))
}

/// `u_{U ∩ V1, V1}(x)` at the grid node nearest `x`.
pub fn thinness_oracle(q: &ThinnessQuery, resolution: usize, cfg: &RelaxConfig) -> Result<f64> {
    q.validate()?;
    let grid = oracle_grid(q, resolution)?;
    let v1 = grid.restriction.clone();
    let u = Domain::intersection(q.set.clone(), v1.clone());
    let env = relative_extremal(&u, &v1, &grid, ObstacleSet::Open, cfg)?;
    env.value_near(&q.x)
}

/// Certificate search plus oracle, combined into a verdict.
pub fn thinness_report(
    q: &ThinnessQuery,
    search: &SearchConfig,
    resolution: usize,
    relax: &RelaxConfig,
) -> Result<ThinnessReport> {
    let found = nonthin_certificate(q, search)?;
    let oracle_value = thinness_oracle(q, resolution, relax)?;
    let verdict = if found.certificate.is_some() {
        Verdict::NonThin
    } else if oracle_value >= -1.0 + THIN_MARGIN {
        Verdict::ThinEvidence
    } else {
        Verdict::Inconclusive
    };
    Ok(ThinnessReport {
        query: q.clone(),
        certificate: found.certificate,
        best_measure: found.best_measure,
        per_degree: found.per_degree,
        oracle_value,
        verdict,
    })
}

/// A finite sample `Y` of a general set, probed through the open supersets
/// `U(rho)`: unions of balls of radius `rho` around `Y \ {x}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudQuery {
    pub points: Vec<Point>,
    pub x: Point,
    pub v_radius: f64,
    pub epsilon: f64,
    /// Decreasing superset radii.
    pub rho_schedule: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RhoResult {
    pub rho: f64,
    pub best_measure: f64,
    pub certificate: Option<Certificate>,
}

/// Per-`rho` results for a point cloud. The verdict is always
/// [`Verdict::Inconclusive`]: a finite schedule cannot cover every open superset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeneralSetReport {
    pub per_rho: Vec<RhoResult>,
    pub all_succeeded: bool,
    pub verdict: Verdict,
}

impl GeneralSetReport {
    /// CSV of `(rho, best measure, success)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# schema=1\nrho,best_measure,certified\n");
        for r in &self.per_rho {
            let _ = writeln!(out, "{:?},{:?},{}", r.rho, r.best_measure, r.certificate.is_some());
        }
        out
    }
}

pub fn general_set_certificate(q: &CloudQuery, cfg: &SearchConfig) -> Result<GeneralSetReport> {
    let others: Vec<Point> = q.points.iter().filter(|p| p.dist(&q.x) > 0.0).cloned().collect();
    if others.is_empty() {
        return Err(Error::InvalidArgument("Y \\ {x} is empty".into()));
    }
    if q.rho_schedule.is_empty() || q.rho_schedule.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument("rho schedule must be nonempty and positive".into()));
    }
    let rho_min = q.rho_schedule.iter().cloned().fold(f64::INFINITY, f64::min);
    let nearest = others.iter().map(|p| p.dist(&q.x)).fold(f64::INFINITY, f64::min);
    if nearest > rho_min {
        return Err(Error::Rejected(format!(
            "x is isolated in the sample: nearest other point at {nearest} > rho {rho_min}"
        )));
    }
    let per_rho = q
        .rho_schedule
        .par_iter()
        .map(|&rho| {
            let set = Domain::BallCloud(BallCloud::new(others.clone(), rho));
            let tq = ThinnessQuery::new(set, q.x, q.v_radius, q.epsilon)?;
            let found = nonthin_certificate(&tq, cfg)?;
            Ok(RhoResult {
                rho,
                best_measure: found.best_measure,
                certificate: found.certificate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let all_succeeded = per_rho.iter().all(|r| r.certificate.is_some());
    Ok(GeneralSetReport {
        per_rho,
        all_succeeded,
        verdict: Verdict::Inconclusive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn slit() -> Domain {
        Domain::slit_disc(c(0.0, 0.0), 1.0, c(0.0, 0.0), c(1.0, 0.0))
    }

    fn punctured() -> Domain {
        Domain::annulus(Point::real(0.0), 0.0, 1.0)
    }

    fn quick() -> SearchConfig {
        SearchConfig {
            degree_schedule: vec![1, 2],
            restarts: 2,
            max_evals: 300,
            ..SearchConfig::default()
        }
    }

    #[test]
    fn slit_certificate_is_linear() {
        let q = ThinnessQuery::new(slit(), Point::real(0.0), 0.1, 0.01).unwrap();
        let s = nonthin_certificate(&q, &quick()).unwrap();
        let cert = s.certificate.unwrap();
        assert_eq!(cert.disc.degree(), 1);
        assert_eq!(cert.disc.coeffs()[0][0], c(0.05, 0.0));
        assert!(cert.measure >= 0.999);
        assert!(cert.revalidated_measure >= 0.999);
    }

    #[test]
    fn punctured_disc_has_full_measure() {
        let q = ThinnessQuery::new(punctured(), Point::real(0.0), 0.1, 0.01).unwrap();
        let cert = nonthin_certificate(&q, &quick()).unwrap().certificate.unwrap();
        assert_eq!(cert.measure, 1.0);
    }

    #[test]
    fn far_point_is_rejected() {
        let q = ThinnessQuery::new(Domain::ball(Point::real(0.2), 0.05), Point::real(0.0), 0.1, 0.1);
        assert!(matches!(q, Err(Error::Rejected(_))));
    }

    #[test]
    fn nonthin_verdict_survives_shrinking_v() {
        let relax = RelaxConfig::default();
        for set in [slit(), punctured()] {
            for v in [0.2, 0.1, 0.05] {
                let q = ThinnessQuery::new(set.clone(), Point::real(0.0), v, 0.01).unwrap();
                let r = thinness_report(&q, &quick(), 32, &relax).unwrap();
                assert_eq!(r.verdict, Verdict::NonThin);
                assert!(r.oracle_value <= -1.0 + 0.05, "{}", r.oracle_value);
            }
        }
    }

    #[test]
    fn oracle_grid_avoids_x() {
        let q = ThinnessQuery::new(Domain::cusp(1.0), Point::real(0.0), 0.5, 0.3).unwrap();
        let g = oracle_grid(&q, 33).unwrap();
        assert_eq!(g.resolution, vec![34, 34]);
        let h = g.max_step();
        let env_far = (0..g.node_count()).map(|i| g.node_point(i).dist(&q.x)).fold(f64::INFINITY, f64::min);
        assert!((env_far - h / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn segment_cloud_per_rho() {
        let pts: Vec<Point> = (0..1000).map(|k| Point::real(k as f64 / 999.0)).collect();
        let q = CloudQuery {
            points: pts,
            x: Point::real(0.0),
            v_radius: 0.2,
            epsilon: 0.001,
            rho_schedule: vec![0.1, 0.01],
        };
        let r = general_set_certificate(&q, &quick()).unwrap();
        assert!(r.all_succeeded);
        assert_eq!(r.verdict, Verdict::Inconclusive);
        for row in &r.per_rho {
            assert!(row.best_measure >= 0.999);
        }
        assert!(r.to_csv().starts_with("# schema=1\n"));
    }

    #[test]
    fn isolated_point_is_rejected() {
        let q = CloudQuery {
            points: vec![Point::real(0.0), Point::real(0.5)],
            x: Point::real(0.0),
            v_radius: 0.2,
            epsilon: 0.1,
            rho_schedule: vec![0.1],
        };
        assert!(matches!(general_set_certificate(&q, &quick()), Err(Error::Rejected(_))));
        let empty = CloudQuery {
            points: vec![Point::real(0.0)],
            ..q
        };
        assert!(general_set_certificate(&empty, &quick()).is_err());
    }
}
