//! Maximum principle checks: for plurisubharmonic `u` and sets `U ⊂⊂ X` that
//! are non-thin at their closure points, the sup of `u` over `U` equals its sup
//! over the boundary of `U`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{make_grid, Domain, GridSpec};
use crate::error::{Error, Result};
use crate::expr::ExprFn;
use crate::point::Point;

/// Largest accepted `sup_U u - sup_{dU} u`.
pub const DEFECT_TOLERANCE: f64 = 0.02;

/// A plurisubharmonic test function with the reason it is one.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PshSample {
    pub name: String,
    pub expr: ExprFn,
    pub note: String,
}

impl PshSample {
    pub fn new(name: &str, expr: &str, note: &str) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            expr: ExprFn::parse(expr)?,
            note: note.into(),
        })
    }
}

/// Worst violation of the sub-mean-value inequality found by [`sub_mean_test`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubMeanCheck {
    pub trials: usize,
    /// Max of `u(p) - average` over the trials (`-inf` when every center is `-inf`).
    pub worst_excess: f64,
}

impl SubMeanCheck {
    pub fn passes(&self) -> bool {
        self.worst_excess <= 1e-8
    }
}

const NODES: usize = 4096;
const MAX_NODES: usize = 262_144;

/// Compares `u(p)` with trapezoidal circle averages of `u` at `trials` random
/// centers in `x` and radii below the margin, along the first coordinate in C^1
/// and along 8 random complex lines per center in C^2. A failing average is
/// recomputed with four times the nodes, up to 2^18.
pub fn sub_mean_test(u: &PshSample, x: &Domain, trials: usize, seed: u64) -> Result<SubMeanCheck> {
    let n = x.dim()?;
    let extent = x.extent();
    let anchor = x.anchor();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut done = 0;
    while done < trials {
        let coords: Vec<Complex64> = (0..n)
            .map(|j| anchor.coord(j) + Complex64::new(rng.random_range(-extent..extent), rng.random_range(-extent..extent)))
            .collect();
        let p = Point::new(&coords)?;
        let margin = x.margin_unchecked(&p);
        if !(margin > 0.0) {
            continue;
        }
        done += 1;
        let r = rng.random_range(0.0..margin.min(0.5 * extent));
        let lines = if n == 1 { 1 } else { 8 };
        let value = u.expr.eval(&p)?;
        for _ in 0..lines {
            let dir = if n == 1 {
                Point::c1(Complex64::new(1.0, 0.0))
            } else {
                let a = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let b = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let s = (a.norm_sqr() + b.norm_sqr()).sqrt().max(1e-12);
                Point::c2(a / s, b / s)
            };
            let mut excess = f64::INFINITY;
            let mut m = NODES;
            // Log singularities close to the circle need more nodes; refine on failure.
            while m <= MAX_NODES && excess > 1e-8 {
                let mut sum = 0.0;
                for k in 0..m {
                    let e = Complex64::from_polar(r, 2.0 * PI * k as f64 / m as f64);
                    sum += u.expr.eval(&(p + dir.scale(e)))?;
                }
                let avg = sum / m as f64;
                excess = if value == f64::NEG_INFINITY { f64::NEG_INFINITY } else { value - avg };
                m *= 4;
            }
            worst = worst.max(excess);
        }
    }
    Ok(SubMeanCheck {
        trials,
        worst_excess: worst,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupComparison {
    pub sup_u: f64,
    pub sup_boundary: f64,
    pub defect: f64,
}

/// `sup_U u` over grid nodes in `U`, `sup_{dU} u` over `boundary_k` boundary
/// samples, and their signed difference.
pub fn sup_compare(u: &PshSample, set: &Domain, x: &Domain, grid: &GridSpec, boundary_k: usize) -> Result<SupComparison> {
    let n = x.dim()?;
    if set.dim()? != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: set.dim()?,
        });
    }
    let boundary = set.boundary_sample(boundary_k)?;
    let worst = boundary.iter().map(|p| x.margin_unchecked(p)).fold(f64::INFINITY, f64::min);
    if !(worst > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "set is not compactly contained in X (boundary margin {worst:e})"
        )));
    }
    let mut sup_boundary = f64::NEG_INFINITY;
    for p in &boundary {
        sup_boundary = sup_boundary.max(u.expr.eval(p)?);
    }
    let mut sup_u = f64::NEG_INFINITY;
    for node in make_grid(grid)? {
        if set.contains_unchecked(&node.point) {
            sup_u = sup_u.max(u.expr.eval(&node.point)?);
        }
    }
    if sup_u == f64::NEG_INFINITY && !sup_boundary.is_finite() {
        return Err(Error::EmptyGrid);
    }
    Ok(SupComparison {
        sup_u,
        sup_boundary,
        defect: sup_u - sup_boundary,
    })
}

/// One `(u, U)` pair of a suite.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuitePair {
    pub sample: PshSample,
    pub set_name: String,
    pub set: Domain,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteRow {
    pub sample: String,
    pub set: String,
    pub comparison: Option<SupComparison>,
    pub error: Option<String>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteTable {
    pub rows: Vec<SuiteRow>,
    pub passed: bool,
}

impl SuiteTable {
    /// CSV with columns `sample, set, sup_U, sup_boundary, defect, pass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# schema=1\nsample,set,sup_U,sup_boundary,defect,pass\n");
        for r in &self.rows {
            let (a, b, d) = match &r.comparison {
                Some(c) => (crate::ext::format(c.sup_u), crate::ext::format(c.sup_boundary), crate::ext::format(c.defect)),
                None => ("nan".into(), "nan".into(), "nan".into()),
            };
            let _ = writeln!(out, "{},{},{a},{b},{d},{}", r.sample, r.set, r.pass);
        }
        out
    }
}

/// Runs every pair; a row passes when `|defect| <= 0.02`.
pub fn run_suite(pairs: &[SuitePair], x: &Domain, grid: &GridSpec, boundary_k: usize) -> SuiteTable {
    let rows: Vec<SuiteRow> = pairs
        .par_iter()
        .map(|pair| match sup_compare(&pair.sample, &pair.set, x, grid, boundary_k) {
            Ok(c) => SuiteRow {
                sample: pair.sample.name.clone(),
                set: pair.set_name.clone(),
                pass: c.defect.abs() <= DEFECT_TOLERANCE,
                comparison: Some(c),
                error: None,
            },
            Err(e) => SuiteRow {
                sample: pair.sample.name.clone(),
                set: pair.set_name.clone(),
                comparison: None,
                error: Some(e.to_string()),
                pass: false,
            },
        })
        .collect();
    let passed = rows.iter().all(|r| r.pass);
    SuiteTable { rows, passed }
}

/// The built-in catalog on `X = ball(0, 1)` in C^1.
pub fn builtin_catalog() -> Vec<SuitePair> {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let ball = |re: f64, r: f64| Domain::ball(Point::real(re), r);
    let s = |name: &str, expr: &str, note: &str| PshSample::new(name, expr, note).expect("catalog expression");
    let pair = |sample: PshSample, set_name: &str, set: Domain| SuitePair {
        sample,
        set_name: set_name.into(),
        set,
    };
    vec![
        pair(
            s("abs2", "abs2(z1)", "squared modulus of a holomorphic function"),
            "annulus(0,0.3,0.8)",
            Domain::annulus(Point::real(0.0), 0.3, 0.8),
        ),
        pair(s("re", "re(z1)", "real part of a holomorphic function"), "ball(0.1,0.5)", ball(0.1, 0.5)),
        pair(
            s("log_dist_0.9", "log(abs(z1 - 0.9))", "log-modulus of a holomorphic function"),
            "ball(0,0.5)",
            ball(0.0, 0.5),
        ),
        pair(
            s("exp_re", "exp(re(z1))", "modulus of exp(z)"),
            "ball(-0.2,0.4)",
            ball(-0.2, 0.4),
        ),
        pair(
            s("abs2_plus_re", "abs2(z1) + re(z1)", "sum of certified samples"),
            "two_balls",
            Domain::union(vec![ball(-0.5, 0.2), ball(0.4, 0.3)]),
        ),
        pair(
            s("max_im_abs2", "max(im(z1), abs2(z1 - 0.3))", "max of certified samples"),
            "slit_disc(0,0.6)",
            Domain::slit_disc(c(0.0, 0.0), 0.6, c(0.0, 0.0), c(0.5, 0.0)),
        ),
        pair(
            s("log_quadratic", "log(abs(z1^2 + 0.25))", "log-modulus of a holomorphic function"),
            "annulus(0.1,0.2,0.7)",
            Domain::annulus(Point::real(0.1), 0.2, 0.7),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Domain {
        Domain::ball(Point::real(0.0), 1.0)
    }

    fn grid(res: usize) -> GridSpec {
        GridSpec::cube(1, -1.0, 1.0, res, x())
    }

    #[test]
    fn catalog_samples_are_subharmonic() {
        for (k, pair) in builtin_catalog().iter().enumerate() {
            let check = sub_mean_test(&pair.sample, &x(), 1000, k as u64).unwrap();
            assert!(check.passes(), "{}: {:?}", pair.sample.name, check);
        }
    }

    #[test]
    fn sub_mean_test_rejects_superharmonic() {
        let u = PshSample::new("neg_abs2", "-abs2(z1)", "not psh").unwrap();
        assert!(!sub_mean_test(&u, &x(), 50, 1).unwrap().passes());
    }

    #[test]
    fn two_dimensional_lines() {
        let x2 = Domain::ball(Point::origin(2).unwrap(), 1.0);
        let u = PshSample::new("norm2", "abs2(z1) + abs2(z2)", "squared norm").unwrap();
        assert!(sub_mean_test(&u, &x2, 100, 3).unwrap().passes());
        let v = PshSample::new("re_prod", "-abs2(z1) + abs2(z2)", "not psh").unwrap();
        assert!(!sub_mean_test(&v, &x2, 100, 3).unwrap().passes());
    }

    #[test]
    fn listed_pairs() {
        let cat = builtin_catalog();
        let c0 = sup_compare(&cat[0].sample, &cat[0].set, &x(), &grid(257), 512).unwrap();
        assert!((c0.sup_boundary - 0.64).abs() < 1e-12);
        assert!(c0.sup_u <= 0.64 && c0.defect.abs() <= 0.01);
        let c1 = sup_compare(&cat[1].sample, &cat[1].set, &x(), &grid(257), 512).unwrap();
        assert!((c1.sup_boundary - 0.6).abs() < 1e-9 && c1.defect.abs() <= 0.01);
        let c2 = sup_compare(&cat[2].sample, &cat[2].set, &x(), &grid(257), 512).unwrap();
        assert!((c2.sup_boundary - 1.4f64.ln()).abs() < 1e-9 && c2.defect.abs() <= 0.02);
    }

    #[test]
    fn suite_passes_and_refines() {
        let cat = builtin_catalog();
        assert!(cat.len() >= 6);
        let coarse = run_suite(&cat, &x(), &grid(257), 512);
        let fine = run_suite(&cat, &x(), &grid(513), 512);
        assert!(coarse.passed && fine.passed, "{}", fine.to_csv());
        for (a, b) in coarse.rows.iter().zip(&fine.rows) {
            let (da, db) = (a.comparison.unwrap().defect, b.comparison.unwrap().defect);
            assert!(db.abs() <= da.abs() + 0.005, "{}: {da} -> {db}", a.sample);
        }
        assert_eq!(fine.to_csv().lines().count(), 2 + cat.len());
    }

    #[test]
    fn empty_catalog_passes() {
        let t = run_suite(&[], &x(), &grid(17), 64);
        assert!(t.passed && t.rows.is_empty());
    }

    #[test]
    fn set_must_be_compactly_contained() {
        let cat = builtin_catalog();
        let big = Domain::ball(Point::real(0.5), 0.6);
        assert!(sup_compare(&cat[0].sample, &big, &x(), &grid(33), 64).is_err());
        let t = run_suite(
            &[SuitePair {
                sample: cat[0].sample.clone(),
                set_name: "big".into(),
                set: big,
            }],
            &x(),
            &grid(33),
            64,
        );
        assert!(!t.passed && t.rows[0].error.is_some());
    }
}
