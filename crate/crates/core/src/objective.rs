//! Piecewise objectives `phi = phi1` off the closure of `W`, `phi2` on `W`, and
//! `min(phi1*, phi2*)` on the boundary of `W`, with sampled upper regularization.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::domain::{r3, Domain};
use crate::error::{Error, Result};
use crate::expr::ExprFn;
use crate::point::Point;

/// Half-width of the band of signed margins treated as the boundary of `W`.
pub const BOUNDARY_BAND: f64 = 1e-12;

/// Minimum number of in-set samples per regularization level.
pub const MIN_STAR_SAMPLES: usize = 64;

/// Successive levels differing by more than this flag a regularization as unstable.
pub const UNSTABLE_JUMP: f64 = 0.1;

impl Serialize for ExprFn {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ExprFn {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        ExprFn::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Default regularization radii `0.05 * 2^-k`, `k = 0..12`.
pub fn default_star_radii() -> Vec<f64> {
    (0..12).map(|k| 0.05 * 0.5f64.powi(k)).collect()
}

/// Sampled upper regularization at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct StarValue {
    /// Value at the finest level.
    pub value: f64,
    /// Sup over the samples of each level, coarse to fine.
    pub levels: Vec<f64>,
    /// Levels are nonincreasing up to 1e-2.
    pub monotone: bool,
    /// Some pair of successive levels differs by more than [`UNSTABLE_JUMP`].
    pub unstable: bool,
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.len() < 8 {
        return Err(Error::InvalidArgument(format!(
            "regularization needs at least 8 radii, got {}",
            radii.len()
        )));
    }
    if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "regularization radii must be positive and strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Unit-ball offsets used for one regularization level. Deterministic, so
/// concurrent evaluations agree.
fn unit_offsets(dim: usize, density: usize) -> Vec<Point> {
    const FRACTIONS: [f64; 5] = [1.0, 0.75, 0.5, 0.25, 0.1];
    let mut out = Vec::with_capacity(FRACTIONS.len() * density);
    for j in 0..density {
        let dir = if dim == 1 {
            Point::c1(Complex64::from_polar(1.0, 2.0 * PI * j as f64 / density as f64))
        } else {
            let (u1, u2, _) = r3(j);
            let t = (j as f64 + 0.5) / density as f64;
            Point::c2(
                Complex64::from_polar(t.sqrt(), 2.0 * PI * u1),
                Complex64::from_polar((1.0 - t).sqrt(), 2.0 * PI * u2),
            )
        };
        for f in FRACTIONS {
            out.push(dir * f);
        }
    }
    out
}

/// Approximates `limsup e(q)` as `q -> p` within `d`, one sup per radius.
pub fn usc_star(e: &ExprFn, d: &Domain, p: &Point, radii: &[f64]) -> Result<StarValue> {
    check_radii(radii)?;
    let n = d.dim()?;
    p.check_dim(n)?;
    let densities: &[usize] = if n == 1 { &[64, 256, 1024, 4096] } else { &[256, 1024, 4096] };
    let offsets: Vec<Vec<Point>> = densities.iter().map(|&m| unit_offsets(n, m)).collect();
    let mut levels = Vec::with_capacity(radii.len());
    for (k, &r) in radii.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for set in &offsets {
            let mut count = 0;
            let mut sup = f64::NEG_INFINITY;
            for o in set {
                let q = *p + *o * r;
                if d.contains_unchecked(&q) {
                    count += 1;
                    sup = sup.max(e.eval(&q)?);
                }
            }
            best = Some((count, sup));
            if count >= MIN_STAR_SAMPLES {
                break;
            }
        }
        match best {
            Some((count, sup)) if count > 0 => levels.push(sup),
            _ if k == 0 => return Err(Error::NotInClosure),
            _ => break,
        }
    }
    let value = *levels.last().unwrap();
    let monotone = levels.windows(2).all(|w| w[1] <= w[0] + 1e-2);
    let unstable = levels.windows(2).any(|w| {
        let (a, b) = (w[0], w[1]);
        if a.is_infinite() || b.is_infinite() {
            a != b
        } else {
            (a - b).abs() > UNSTABLE_JUMP
        }
    });
    Ok(StarValue {
        value,
        levels,
        monotone,
        unstable,
    })
}

/// Which of the three definitions of `phi` applies at a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    /// In `W`; `phi = phi2`.
    Inner,
    /// In `X` off the closure of `W`; `phi = phi1`.
    Outer,
    /// Within the boundary band of `W`.
    Boundary,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ObjectiveSpec", into = "ObjectiveSpec")]
pub struct PiecewiseObjective {
    x: Domain,
    w: Domain,
    phi1: ExprFn,
    phi2: ExprFn,
    boundary_values: Option<ExprFn>,
    star_radii: Vec<f64>,
    outer: Domain,
    dim: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectiveSpec {
    #[serde(rename = "X")]
    x: Domain,
    #[serde(rename = "W")]
    w: Domain,
    phi1: ExprFn,
    phi2: ExprFn,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boundary_values: Option<ExprFn>,
    #[serde(default = "default_star_radii")]
    star_radii: Vec<f64>,
}

impl TryFrom<ObjectiveSpec> for PiecewiseObjective {
    type Error = Error;
    fn try_from(s: ObjectiveSpec) -> Result<Self> {
        let mut obj = PiecewiseObjective::new(s.x, s.w, s.phi1, s.phi2)?;
        if let Some(b) = s.boundary_values {
            obj = obj.with_boundary_values(b)?;
        }
        obj.with_star_radii(s.star_radii)
    }
}

impl From<PiecewiseObjective> for ObjectiveSpec {
    fn from(o: PiecewiseObjective) -> Self {
        ObjectiveSpec {
            x: o.x,
            w: o.w,
            phi1: o.phi1,
            phi2: o.phi2,
            boundary_values: o.boundary_values,
            star_radii: o.star_radii,
        }
    }
}

impl PiecewiseObjective {
    /// Validates `W ⊂ X`, `W ≠ X` by sampling and checks expression dimensions.
    pub fn new(x: Domain, w: Domain, phi1: ExprFn, phi2: ExprFn) -> Result<Self> {
        let dim = x.dim()?;
        let wd = w.dim()?;
        if wd != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: wd,
            });
        }
        for e in [&phi1, &phi2] {
            if e.required_dim() > dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: e.required_dim(),
                });
            }
        }
        let inside_w = sample_set(&w, 1000);
        if inside_w.is_empty() {
            return Err(Error::InvalidArgument("no sample point found in W".into()));
        }
        if let Some(p) = inside_w.iter().find(|p| !x.contains_unchecked(p)) {
            return Err(Error::InvalidArgument(format!("W is not contained in X: {p:?} is in W only")));
        }
        let outer = Domain::difference(x.clone(), w.clone());
        if sample_set(&outer, 1).is_empty() {
            return Err(Error::InvalidArgument("no point of X outside the closure of W found".into()));
        }
        Ok(Self {
            x,
            w,
            phi1,
            phi2,
            boundary_values: None,
            star_radii: default_star_radii(),
            outer,
            dim,
        })
    }

    pub fn with_boundary_values(mut self, b: ExprFn) -> Result<Self> {
        if b.required_dim() > self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: b.required_dim(),
            });
        }
        self.boundary_values = Some(b);
        Ok(self)
    }

    pub fn with_star_radii(mut self, radii: Vec<f64>) -> Result<Self> {
        check_radii(&radii)?;
        self.star_radii = radii;
        Ok(self)
    }

    pub fn x(&self) -> &Domain {
        &self.x
    }

    pub fn w(&self) -> &Domain {
        &self.w
    }

    /// `X` minus the closure of `W`.
    pub fn outer(&self) -> &Domain {
        &self.outer
    }

    pub fn phi1(&self) -> &ExprFn {
        &self.phi1
    }

    pub fn phi2(&self) -> &ExprFn {
        &self.phi2
    }

    pub fn boundary_values(&self) -> Option<&ExprFn> {
        self.boundary_values.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `inf phi` when every piece is a constant expression.
    pub fn constant_lower_bound(&self) -> Option<f64> {
        let mut lo = self.phi1.as_constant()?.min(self.phi2.as_constant()?);
        if let Some(b) = &self.boundary_values {
            lo = lo.min(b.as_constant()?);
        }
        Some(lo)
    }

    /// `phi1` and `phi2` are the same expression.
    pub fn is_glued(&self) -> bool {
        self.phi1 == self.phi2 && self.boundary_values.as_ref().is_none_or(|b| *b == self.phi1)
    }

    pub fn region(&self, p: &Point) -> Region {
        let m = self.w.margin_unchecked(p);
        if m > 0.0 {
            Region::Inner
        } else if m < -BOUNDARY_BAND {
            Region::Outer
        } else {
            Region::Boundary
        }
    }

    /// `phi(p)` for `p` in `X`; finite or `-inf`.
    pub fn eval_phi(&self, p: &Point) -> Result<f64> {
        p.check_dim(self.dim)?;
        if !self.x.contains_unchecked(p) {
            return Err(Error::OutsideDomain(format!("X at {p:?}")));
        }
        self.eval_phi_in_x(p)
    }

    /// As [`eval_phi`](Self::eval_phi) without the dimension and membership checks.
    pub fn eval_phi_in_x(&self, p: &Point) -> Result<f64> {
        self.eval_phi_with_margin(p, self.w.margin_unchecked(p))
    }

    /// As [`eval_phi_in_x`](Self::eval_phi_in_x) with `margin_W(p)` supplied by the caller.
    pub fn eval_phi_with_margin(&self, p: &Point, margin_w: f64) -> Result<f64> {
        let region = if margin_w > 0.0 {
            Region::Inner
        } else if margin_w < -BOUNDARY_BAND {
            Region::Outer
        } else {
            Region::Boundary
        };
        let v = match region {
            Region::Inner => self.phi2.eval(p)?,
            Region::Outer => self.phi1.eval(p)?,
            Region::Boundary => match &self.boundary_values {
                Some(b) => b.eval(p)?,
                None => {
                    let a = usc_star(&self.phi1, &self.outer, p, &self.star_radii)?;
                    let b = usc_star(&self.phi2, &self.w, p, &self.star_radii)?;
                    a.value.min(b.value)
                }
            },
        };
        if v == f64::INFINITY {
            Err(Error::PositiveInfinity)
        } else {
            Ok(v)
        }
    }
}

/// Up to `k` deterministic points of `d`, by rejection from a box around it.
pub fn sample_set(d: &Domain, k: usize) -> Vec<Point> {
    let Ok(n) = d.dim() else { return Vec::new() };
    let c = d.anchor();
    let r = d.extent();
    let mut out = Vec::with_capacity(k);
    let attempts = 200 * k.max(500);
    for j in 0..attempts {
        let (a, b, e) = r3(j);
        let p = if n == 1 {
            Point::c1(c.coord(0) + Complex64::new(r * (2.0 * a - 1.0), r * (2.0 * b - 1.0)))
        } else {
            let (_, _, f) = r3(j + attempts);
            Point::c2(
                c.coord(0) + Complex64::new(r * (2.0 * a - 1.0), r * (2.0 * b - 1.0)),
                c.coord(1) + Complex64::new(r * (2.0 * e - 1.0), r * (2.0 * f - 1.0)),
            )
        };
        if d.contains_unchecked(&p) {
            out.push(p);
            if out.len() == k {
                break;
            }
        }
    }
    out
}
