//! Polynomial analytic discs, circle quadrature, disc classification and the
//! Poisson disc functional.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::objective::PiecewiseObjective;
use crate::point::Point;

/// Safety threshold on margins for strict containment.
pub const MU: f64 = 1e-6;

/// Slack on `|z| <= 1` accepted by [`AnalyticDisc::eval`].
pub const UNIT_SLACK: f64 = 1e-12;

/// `f(z) = center + sum_{k=1..d} coeffs[j][k-1] z^k` in each coordinate `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DiscSpec", into = "DiscSpec")]
pub struct AnalyticDisc {
    center: Point,
    coeffs: Vec<Vec<Complex64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscSpec {
    center: Point,
    degree: usize,
    coeffs: Vec<Vec<[f64; 2]>>,
}

impl TryFrom<DiscSpec> for AnalyticDisc {
    type Error = Error;
    fn try_from(s: DiscSpec) -> Result<Self> {
        if s.coeffs.iter().any(|c| c.len() != s.degree) {
            return Err(Error::InvalidArgument(format!(
                "every coordinate needs {} coefficients",
                s.degree
            )));
        }
        let coeffs = s
            .coeffs
            .into_iter()
            .map(|c| c.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
            .collect();
        AnalyticDisc::new(s.center, coeffs)
    }
}

impl From<AnalyticDisc> for DiscSpec {
    fn from(f: AnalyticDisc) -> Self {
        DiscSpec {
            center: f.center,
            degree: f.degree(),
            coeffs: f
                .coeffs
                .iter()
                .map(|c| c.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }
}

impl AnalyticDisc {
    /// `coeffs[j]` holds the coefficients of `z^1..z^d` in coordinate `j`.
    pub fn new(center: Point, coeffs: Vec<Vec<Complex64>>) -> Result<Self> {
        if coeffs.len() != center.dim() {
            return Err(Error::DimensionMismatch {
                expected: center.dim(),
                found: coeffs.len(),
            });
        }
        let d = coeffs[0].len();
        if coeffs.iter().any(|c| c.len() != d) {
            return Err(Error::InvalidArgument("ragged coefficient table".into()));
        }
        Ok(Self { center, coeffs })
    }

    pub fn constant(center: Point) -> Self {
        Self {
            center,
            coeffs: vec![Vec::new(); center.dim()],
        }
    }

    /// Disc in C^1 from coefficients of `z^1..z^d`.
    pub fn c1(center: Complex64, coeffs: Vec<Complex64>) -> Self {
        Self {
            center: Point::c1(center),
            coeffs: vec![coeffs],
        }
    }

    /// `center + z * direction`, a linear disc.
    pub fn linear(center: Point, direction: Point) -> Self {
        Self {
            center,
            coeffs: direction.coords().iter().map(|c| vec![*c]).collect(),
        }
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn degree(&self) -> usize {
        self.coeffs[0].len()
    }

    pub fn coeffs(&self) -> &[Vec<Complex64>] {
        &self.coeffs
    }

    /// Same disc with zero coefficients appended up to degree `d`.
    pub fn padded(&self, d: usize) -> Self {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            c.resize(d.max(c.len()), Complex64::new(0.0, 0.0));
        }
        out
    }

    /// `z -> f(r z)`.
    pub fn dilate(&self, r: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            let mut rk = 1.0;
            for a in c.iter_mut() {
                rk *= r;
                *a *= rk;
            }
        }
        out
    }

    pub fn eval(&self, z: Complex64) -> Result<Point> {
        let r = z.norm();
        if !(r <= 1.0 + UNIT_SLACK) {
            return Err(Error::OutsideUnitDisc(r));
        }
        Ok(self.eval_unchecked(z))
    }

    pub fn eval_unchecked(&self, z: Complex64) -> Point {
        let mut out = self.center;
        let mut coords = [Complex64::new(0.0, 0.0); 2];
        for (j, c) in self.coeffs.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in c.iter().rev() {
                acc = (acc + a) * z;
            }
            coords[j] = acc;
        }
        if self.degree() > 0 {
            let shift = if self.dim() == 1 {
                Point::c1(coords[0])
            } else {
                Point::c2(coords[0], coords[1])
            };
            out = out + shift;
        }
        out
    }

    /// Images of the quadrature nodes.
    pub fn boundary_points(&self, q: &CircleQuadrature) -> Vec<Point> {
        q.nodes().iter().map(|z| self.eval_unchecked(*z)).collect()
    }
}

/// Equal-weight rule on `M` equally spaced nodes of the unit circle.
#[derive(Clone, Debug)]
pub struct CircleQuadrature {
    nodes: Vec<Complex64>,
}

impl CircleQuadrature {
    pub fn new(m: usize) -> Result<Self> {
        if m < 256 || !m.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "quadrature size must be a power of two >= 256, got {m}"
            )));
        }
        Ok(Self::with_nodes(m))
    }

    /// Any node count, for internal probing.
    pub(crate) fn with_nodes(m: usize) -> Self {
        let nodes = (0..m)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64))
            .collect();
        Self { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.nodes.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscLabel {
    B1,
    B2,
    GeneralFeasible,
    Infeasible,
}

impl DiscLabel {
    pub fn is_feasible(self) -> bool {
        self != DiscLabel::Infeasible
    }

    pub fn in_b(self) -> bool {
        matches!(self, DiscLabel::B1 | DiscLabel::B2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscClass {
    pub label: DiscLabel,
    /// Min of the signed margin of `X` over the sampled closed disc.
    pub range_margin: f64,
    /// Min over the boundary circle of the margin of `W`.
    pub inner_margin: f64,
    /// Min over the boundary circle of the margin of `X` minus the closure of `W`.
    pub outer_margin: f64,
}

impl DiscClass {
    /// Boundary margin relevant to the label.
    pub fn boundary_margin(&self) -> f64 {
        match self.label {
            DiscLabel::B1 => self.inner_margin,
            DiscLabel::B2 => self.outer_margin,
            _ => self.inner_margin.max(self.outer_margin),
        }
    }

    fn from_margins(range_margin: f64, inner_margin: f64, outer_margin: f64) -> Self {
        let label = if !(range_margin >= MU) {
            DiscLabel::Infeasible
        } else if inner_margin >= MU {
            DiscLabel::B1
        } else if outer_margin >= MU {
            DiscLabel::B2
        } else {
            DiscLabel::GeneralFeasible
        };
        Self {
            label,
            range_margin,
            inner_margin,
            outer_margin,
        }
    }
}

/// Min of `d`'s margin over `f` on circles `r = 1, 0.95, ..., 0.05` and the center.
pub fn range_margin(f: &AnalyticDisc, d: &Domain, probe: &CircleQuadrature) -> f64 {
    let mut m = d.margin_unchecked(&f.center);
    for s in 0..20 {
        let r = 1.0 - 0.05 * s as f64;
        for z in probe.nodes() {
            m = m.min(d.margin_unchecked(&f.eval_unchecked(z * r)));
        }
    }
    m
}

/// Labels `f` as B1, B2, general feasible or infeasible with `probe` angles.
pub fn classify(f: &AnalyticDisc, obj: &PiecewiseObjective, probe: usize) -> Result<DiscClass> {
    if probe < 1024 {
        return Err(Error::InvalidArgument(format!(
            "classification needs at least 1024 probe angles, got {probe}"
        )));
    }
    f.center.check_dim(obj.dim())?;
    let q = CircleQuadrature::with_nodes(probe);
    Ok(classify_with(f, obj, &q))
}

pub(crate) fn classify_with(f: &AnalyticDisc, obj: &PiecewiseObjective, q: &CircleQuadrature) -> DiscClass {
    let range = range_margin(f, obj.x(), q);
    let mut inner = f64::INFINITY;
    let mut outer = f64::INFINITY;
    for p in f.boundary_points(q) {
        inner = inner.min(obj.w().margin_unchecked(&p));
        outer = outer.min(obj.outer().margin_unchecked(&p));
    }
    DiscClass::from_margins(range, inner, outer)
}

/// Quadrature mean of `phi` over the boundary of `f`; `-inf` absorbs.
pub fn poisson_mean(f: &AnalyticDisc, obj: &PiecewiseObjective, q: &CircleQuadrature) -> Result<f64> {
    f.center.check_dim(obj.dim())?;
    let range = range_margin(f, obj.x(), q);
    if !(range >= MU) {
        return Err(Error::InfeasibleDisc(format!("range margin {range:e} below {MU:e}")));
    }
    boundary_mean(f, obj, q)
}

/// Poisson mean without the feasibility check; nodes outside `X` are errors.
pub(crate) fn boundary_mean(f: &AnalyticDisc, obj: &PiecewiseObjective, q: &CircleQuadrature) -> Result<f64> {
    let mut sum = 0.0;
    for z in q.nodes() {
        let v = obj.eval_phi(&f.eval_unchecked(*z))?;
        if v == f64::NEG_INFINITY {
            return Ok(v);
        }
        sum += v;
    }
    Ok(sum * q.weight())
}

/// Fraction of quadrature nodes mapped into `target`.
pub fn boundary_measure(f: &AnalyticDisc, target: &Domain, q: &CircleQuadrature) -> f64 {
    let hits = q
        .nodes()
        .iter()
        .filter(|z| target.contains_unchecked(&f.eval_unchecked(**z)))
        .count();
    hits as f64 / q.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ExprFn;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn objective(x_radius: f64, phi1: &str, phi2: &str) -> PiecewiseObjective {
        PiecewiseObjective::new(
            Domain::ball(Point::real(0.0), x_radius),
            Domain::ball(Point::real(0.0), 0.5),
            ExprFn::parse(phi1).unwrap(),
            ExprFn::parse(phi2).unwrap(),
        )
        .unwrap()
    }

    fn quadratic() -> AnalyticDisc {
        AnalyticDisc::c1(c(0.5, 0.0), vec![c(0.1, 0.0), c(1.0, 0.0)])
    }

    /// `0.5 + 1.1 z^2`: centered on the boundary of `W`, boundary circle in `|z| > 0.5`.
    fn certificate() -> AnalyticDisc {
        AnalyticDisc::c1(c(0.5, 0.0), vec![c(0.0, 0.0), c(1.1, 0.0)])
    }

    #[test]
    fn eval_examples() {
        let f = quadratic();
        assert_eq!(f.eval(c(1.0, 0.0)).unwrap(), Point::c1(c(1.6, 0.0)));
        let p = f.eval(c(0.0, 1.0)).unwrap();
        assert!(p.dist(&Point::c1(c(-0.5, 0.1))) < 1e-15);
        assert_eq!(f.eval(c(0.0, 0.0)).unwrap(), f.center());
        assert!(matches!(f.eval(c(1.0, 1e-3)), Err(Error::OutsideUnitDisc(_))));
    }

    #[test]
    fn quadrature_exactness() {
        let q = CircleQuadrature::new(256).unwrap();
        for m in 0..256 {
            let mean: Complex64 = q.nodes().iter().map(|z| z.powi(m)).sum::<Complex64>() * q.weight();
            let expect = if m == 0 { 1.0 } else { 0.0 };
            assert!((mean - expect).norm() < 1e-13, "m = {m}: {mean}");
        }
        assert!(CircleQuadrature::new(100).is_err());
        assert!(CircleQuadrature::new(128).is_err());
    }

    #[test]
    fn classify_examples() {
        let big = objective(2.0, "2", "-1");
        let k = classify(&certificate(), &big, 4096).unwrap();
        assert_eq!(k.label, DiscLabel::B2, "{k:?}");
        assert!((k.boundary_margin() - 0.1).abs() < 1e-9);
        // 0.5 + 0.1z + z^2 reaches |f| = 0.49875 on the circle, so it meets W.
        let oracle = (0..200_000)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / 200_000.0;
                let z = Complex64::from_polar(1.0, t);
                (z * z + 0.1 * z + 0.5).norm() - 0.5
            })
            .fold(f64::INFINITY, f64::min);
        let k = classify(&quadratic(), &big, 4096).unwrap();
        assert_eq!(k.label, DiscLabel::GeneralFeasible);
        assert!((k.inner_margin.max(k.outer_margin) - oracle).abs() < 1e-5);
        assert!((oracle + 0.00125).abs() < 1e-4);

        let jump = objective(1.0, "2", "-1");
        let k = classify(&AnalyticDisc::constant(Point::real(0.25)), &jump, 1024).unwrap();
        assert_eq!(k.label, DiscLabel::B1);
        let k = classify(&AnalyticDisc::c1(c(0.5, 0.0), vec![c(1.0, 0.0)]), &jump, 1024).unwrap();
        assert_eq!(k.label, DiscLabel::Infeasible);
        assert!(classify(&certificate(), &jump, 512).is_err());
    }

    #[test]
    fn poisson_examples() {
        let q = CircleQuadrature::new(1024).unwrap();
        let jump = objective(1.0, "2", "-1");
        let p = Point::real(0.7);
        assert_eq!(poisson_mean(&AnalyticDisc::constant(p), &jump, &q).unwrap(), 2.0);
        let big = objective(2.0, "2", "-1");
        assert_eq!(poisson_mean(&certificate(), &big, &q).unwrap(), 2.0);
        assert!(matches!(
            poisson_mean(&certificate(), &jump, &q),
            Err(Error::InfeasibleDisc(_))
        ));

        let sq = objective(3.0, "abs2(z1)", "abs2(z1)");
        let (a, b) = (c(0.3, -0.2), c(0.5, 0.9));
        let f = AnalyticDisc::c1(a, vec![b]);
        let v = poisson_mean(&f, &sq, &q).unwrap();
        assert!((v - (a.norm_sqr() + b.norm_sqr())).abs() < 1e-12);

        let logs = objective(3.0, "log(abs(z1 - 1))", "log(abs(z1 - 1))");
        let f = AnalyticDisc::c1(c(0.0, 0.0), vec![c(1.0, 0.0)]);
        assert_eq!(poisson_mean(&f, &logs, &q).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn measure_examples() {
        let q = CircleQuadrature::new(1024).unwrap();
        let slit = Domain::slit_disc(c(0.0, 0.0), 1.0, c(0.0, 0.0), c(1.0, 0.0));
        let f = AnalyticDisc::c1(c(0.0, 0.0), vec![c(0.1, 0.0)]);
        let m = boundary_measure(&f, &slit, &q);
        assert!(m >= 1.0 - 2.0 / 1024.0);
        let f = AnalyticDisc::constant(Point::real(0.5));
        assert_eq!(boundary_measure(&f, &Domain::ball(Point::real(0.0), 1.0), &q), 1.0);
        let half = Domain::intersection(
            Domain::ball(Point::real(0.0), 2.0),
            Domain::ball(Point::real(100.0), 100.0),
        );
        let f = AnalyticDisc::c1(c(0.0, 0.0), vec![c(1.0, 0.0)]);
        assert!((boundary_measure(&f, &half, &q) - 0.5).abs() <= 1.0 / 1024.0 + 1e-3);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let f = AnalyticDisc::new(
            Point::c2(c(0.1, 0.2), c(-0.3, 1.0 / 3.0)),
            vec![vec![c(1e-17, 0.5), c(0.25, -0.75)], vec![c(PI, 0.0), c(0.0, -1e300)]],
        )
        .unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"degree\":2"));
        let back: AnalyticDisc = serde_json::from_str(&s).unwrap();
        assert_eq!(f, back);
        assert!(serde_json::from_str::<AnalyticDisc>(r#"{"center":[[0,0]],"degree":2,"coeffs":[[[1,0]]]}"#).is_err());
    }

    #[test]
    fn padding_and_dilation() {
        let f = certificate();
        let g = f.padded(6);
        let h = f.dilate(0.5);
        for t in [0.0, 0.3, 2.0] {
            let z = Complex64::from_polar(1.0, t);
            assert_eq!(f.eval(z).unwrap(), g.eval(z).unwrap());
            assert!(h.eval(z).unwrap().dist(&f.eval(z * 0.5).unwrap()) < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn rotation_invariance(a in -0.3f64..0.3, b in -0.3f64..0.3, c1 in -0.3f64..0.3, c2 in -0.3f64..0.3, k in 0usize..1024) {
            let q = CircleQuadrature::new(1024).unwrap();
            let obj = objective(1.0, "abs(z1 - 0.9) + re(z1)^3", "abs2(z1)");
            let f = AnalyticDisc::c1(c(a, b), vec![c(c1, c2), c(0.1, -0.05)]);
            let rot = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / 1024.0);
            let g = AnalyticDisc::c1(c(a, b), vec![c(c1, c2) * rot, c(0.1, -0.05) * rot * rot]);
            let (u, v) = (poisson_mean(&f, &obj, &q).unwrap(), poisson_mean(&g, &obj, &q).unwrap());
            prop_assert!((u - v).abs() < 1e-10);
        }

        #[test]
        fn linear_mean_value(a in -0.3f64..0.3, b in -0.3f64..0.3, coeffs in proptest::collection::vec((-0.1f64..0.1, -0.1f64..0.1), 1..6)) {
            let q = CircleQuadrature::new(256).unwrap();
            let obj = objective(1.0, "2 * re(z1) - 3 * im(z1)", "2 * re(z1) - 3 * im(z1)");
            let f = AnalyticDisc::c1(c(a, b), coeffs.iter().map(|(x, y)| c(*x, *y)).collect());
            let v = poisson_mean(&f, &obj, &q).unwrap();
            prop_assert!((v - (2.0 * a - 3.0 * b)).abs() < 1e-12);
        }

        #[test]
        fn labels_respect_margins(a in -0.9f64..0.9, r in 0.0f64..0.8, t in 0.0f64..6.3) {
            let obj = objective(1.0, "2", "-1");
            let f = AnalyticDisc::c1(c(a, 0.0), vec![Complex64::from_polar(r, t), c(0.05, 0.0)]);
            let k = classify(&f, &obj, 1024).unwrap();
            if k.label.in_b() {
                prop_assert!(k.boundary_margin() >= MU);
            }
            if k.label.is_feasible() {
                prop_assert!(k.range_margin >= MU);
            }
        }
    }
}
