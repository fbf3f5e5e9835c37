//! Open sets of C^n from a fixed constructor catalog, with exact (or conservative)
//! signed margins, boundary sampling and grid enumeration.
//!
//! Every catalog kind satisfies `contains(p) <=> signed_margin(p) > 0`. For the
//! primitive kinds the margin is the distance to the boundary (Euclidean for
//! balls and annuli, min-coordinate for polydiscs). Composite kinds combine the
//! margins of their parts with min/max, which never overstates the distance of
//! an interior point to the boundary.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::Point;

/// Maximum composite nesting depth accepted by [`Domain::boundary_sample`].
pub const MAX_SAMPLING_DEPTH: usize = 2;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    /// `{ p : |p - center| < radius }`
    Ball { center: Point, radius: f64 },
    /// `{ p : inner < |p - center| < outer }`
    Annulus {
        center: Point,
        inner: f64,
        outer: f64,
    },
    /// Product of discs `|p_j - center_j| < radii_j`.
    Polydisc { center: Point, radii: Vec<f64> },
    /// Disc in C^1 with the closed segment `slit[0]..slit[1]` removed.
    SlitDisc {
        center: Point,
        radius: f64,
        slit: [Complex64; 2],
    },
    /// Exponential cusp in C^1 with vertex `apex`:
    /// `{ apex + x + iy : 0 < x < x_max, |y| < exp(-steepness / x) }`.
    CuspRegion {
        #[serde(default)]
        apex: Complex64,
        x_max: f64,
        #[serde(default = "default_steepness")]
        steepness: f64,
    },
    /// `a` minus the closure of `b`.
    Difference { a: Box<Domain>, b: Box<Domain> },
    Intersection { a: Box<Domain>, b: Box<Domain> },
    Union { parts: Vec<Domain> },
    /// Union of open balls of a common radius around a finite point cloud.
    BallCloud(BallCloud),
}

fn default_steepness() -> f64 {
    1.0
}

impl Domain {
    pub fn ball(center: Point, radius: f64) -> Self {
        Domain::Ball { center, radius }
    }

    pub fn annulus(center: Point, inner: f64, outer: f64) -> Self {
        Domain::Annulus {
            center,
            inner,
            outer,
        }
    }

    pub fn polydisc(center: Point, radii: Vec<f64>) -> Self {
        Domain::Polydisc { center, radii }
    }

    pub fn slit_disc(center: Complex64, radius: f64, from: Complex64, to: Complex64) -> Self {
        Domain::SlitDisc {
            center: Point::c1(center),
            radius,
            slit: [from, to],
        }
    }

    pub fn cusp(x_max: f64) -> Self {
        Domain::CuspRegion {
            apex: Complex64::new(0.0, 0.0),
            x_max,
            steepness: 1.0,
        }
    }

    pub fn difference(a: Domain, b: Domain) -> Self {
        Domain::Difference {
            a: Box::new(a),
            b: Box::new(b),
        }
    }

    pub fn intersection(a: Domain, b: Domain) -> Self {
        Domain::Intersection {
            a: Box::new(a),
            b: Box::new(b),
        }
    }

    pub fn union(parts: Vec<Domain>) -> Self {
        Domain::Union { parts }
    }

    /// Ambient dimension n, after checking that every part agrees on it.
    pub fn dim(&self) -> Result<usize> {
        let n = match self {
            Domain::Ball { center, radius } => {
                positive("radius", *radius)?;
                center.dim()
            }
            Domain::Annulus {
                center,
                inner,
                outer,
            } => {
                if !(*inner >= 0.0 && outer > inner) {
                    return Err(Error::InvalidArgument(format!(
                        "annulus radii must satisfy 0 <= inner < outer, got {inner}, {outer}"
                    )));
                }
                center.dim()
            }
            Domain::Polydisc { center, radii } => {
                if radii.len() != center.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: center.dim(),
                        found: radii.len(),
                    });
                }
                for r in radii {
                    positive("polydisc radius", *r)?;
                }
                center.dim()
            }
            Domain::SlitDisc { center, radius, .. } => {
                positive("radius", *radius)?;
                center.check_dim(1)?;
                1
            }
            Domain::CuspRegion {
                x_max, steepness, ..
            } => {
                positive("x_max", *x_max)?;
                positive("steepness", *steepness)?;
                1
            }
            Domain::Difference { a, b } | Domain::Intersection { a, b } => {
                let n = a.dim()?;
                let m = b.dim()?;
                if n != m {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: m,
                    });
                }
                n
            }
            Domain::Union { parts } => {
                let first = parts
                    .first()
                    .ok_or_else(|| Error::InvalidArgument("empty union".into()))?
                    .dim()?;
                for p in &parts[1..] {
                    let m = p.dim()?;
                    if m != first {
                        return Err(Error::DimensionMismatch {
                            expected: first,
                            found: m,
                        });
                    }
                }
                first
            }
            Domain::BallCloud(c) => c.dim,
        };
        if n == 1 || n == 2 {
            Ok(n)
        } else {
            Err(Error::UnsupportedDimension(n))
        }
    }

    /// Open-set membership.
    pub fn contains(&self, p: &Point) -> Result<bool> {
        p.check_dim(self.dim()?)?;
        Ok(self.contains_unchecked(p))
    }

    /// Signed margin: positive inside, negative outside.
    pub fn signed_margin(&self, p: &Point) -> Result<f64> {
        p.check_dim(self.dim()?)?;
        Ok(self.margin_unchecked(p))
    }

    /// Membership in the closure (margin >= 0).
    pub fn closure_contains(&self, p: &Point) -> Result<bool> {
        Ok(self.signed_margin(p)? >= 0.0)
    }

    /// Membership without validating dimensions; callers on hot paths validate once.
    pub fn contains_unchecked(&self, p: &Point) -> bool {
        match self {
            Domain::Ball { center, radius } => p.dist(center) < *radius,
            Domain::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = p.dist(center);
                *inner < r && r < *outer
            }
            Domain::Polydisc { center, radii } => p
                .coords()
                .iter()
                .zip(center.coords())
                .zip(radii)
                .all(|((z, c), r)| (z - c).norm() < *r),
            Domain::SlitDisc {
                center,
                radius,
                slit,
            } => p.dist(center) < *radius && segment_distance(p.coord(0), slit[0], slit[1]) > 0.0,
            Domain::CuspRegion {
                apex,
                x_max,
                steepness,
            } => {
                let w = p.coord(0) - apex;
                w.re > 0.0 && w.re < *x_max && w.im.abs() < (-steepness / w.re).exp()
            }
            Domain::Difference { a, b } => a.contains_unchecked(p) && b.margin_unchecked(p) < 0.0,
            Domain::Intersection { a, b } => a.contains_unchecked(p) && b.contains_unchecked(p),
            Domain::Union { parts } => parts.iter().any(|d| d.contains_unchecked(p)),
            Domain::BallCloud(c) => c.nearest_distance(p) < c.radius,
        }
    }

    pub fn margin_unchecked(&self, p: &Point) -> f64 {
        match self {
            Domain::Ball { center, radius } => radius - p.dist(center),
            Domain::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = p.dist(center);
                (r - inner).min(outer - r)
            }
            Domain::Polydisc { center, radii } => p
                .coords()
                .iter()
                .zip(center.coords())
                .zip(radii)
                .map(|((z, c), r)| r - (z - c).norm())
                .fold(f64::INFINITY, f64::min),
            Domain::SlitDisc {
                center,
                radius,
                slit,
            } => {
                let disc = radius - p.dist(center);
                if disc <= 0.0 {
                    disc
                } else {
                    disc.min(segment_distance(p.coord(0), slit[0], slit[1]))
                }
            }
            Domain::CuspRegion {
                apex,
                x_max,
                steepness,
            } => {
                let w = p.coord(0) - apex;
                // Vertical gaps shrink by the steepest slope of the profile.
                let slope = 4.0 / steepness * (-2.0f64).exp();
                let gap = if w.re > 0.0 {
                    ((-steepness / w.re).exp() - w.im.abs()) / (1.0 + slope * slope).sqrt()
                } else {
                    -w.im.abs()
                };
                w.re.min(x_max - w.re).min(gap)
            }
            Domain::Difference { a, b } => a.margin_unchecked(p).min(-b.margin_unchecked(p)),
            Domain::Intersection { a, b } => a.margin_unchecked(p).min(b.margin_unchecked(p)),
            Domain::Union { parts } => parts
                .iter()
                .map(|d| d.margin_unchecked(p))
                .fold(f64::NEG_INFINITY, f64::max),
            Domain::BallCloud(c) => c.radius - c.nearest_distance(p),
        }
    }

    /// True when `z -> signed_margin(f(z))` is superharmonic for every holomorphic
    /// `f`, so that its minimum over a closed disc is attained on the circle.
    pub fn margin_is_superharmonic(&self) -> bool {
        match self {
            Domain::Ball { .. } | Domain::Polydisc { .. } => true,
            Domain::Intersection { a, b } => {
                a.margin_is_superharmonic() && b.margin_is_superharmonic()
            }
            _ => false,
        }
    }

    /// A distinguished point of the set (center, apex, or first component's anchor).
    pub fn anchor(&self) -> Point {
        match self {
            Domain::Ball { center, .. }
            | Domain::Annulus { center, .. }
            | Domain::Polydisc { center, .. }
            | Domain::SlitDisc { center, .. } => *center,
            Domain::CuspRegion { apex, .. } => Point::c1(*apex),
            Domain::Difference { a, .. } | Domain::Intersection { a, .. } => a.anchor(),
            Domain::Union { parts } => parts[0].anchor(),
            Domain::BallCloud(c) => c.points[0],
        }
    }

    /// Radius of a ball around `anchor()` containing the set.
    pub fn extent(&self) -> f64 {
        match self {
            Domain::Ball { radius, .. } | Domain::SlitDisc { radius, .. } => *radius,
            Domain::Annulus { outer, .. } => *outer,
            Domain::Polydisc { radii, .. } => radii.iter().map(|r| r * r).sum::<f64>().sqrt(),
            Domain::CuspRegion {
                x_max, steepness, ..
            } => x_max.hypot((-steepness / x_max).exp()),
            Domain::Difference { a, .. } => a.extent(),
            Domain::Intersection { a, b } => a.extent().min(b.extent() + a.anchor().dist(&b.anchor())),
            Domain::Union { parts } => {
                let c = parts[0].anchor();
                parts
                    .iter()
                    .map(|d| d.anchor().dist(&c) + d.extent())
                    .fold(0.0, f64::max)
            }
            Domain::BallCloud(cloud) => {
                let c = cloud.points[0];
                cloud
                    .points
                    .iter()
                    .map(|q| q.dist(&c))
                    .fold(0.0, f64::max)
                    + cloud.radius
            }
        }
    }

    /// Composite nesting depth (primitive kinds have depth 0).
    pub fn depth(&self) -> usize {
        match self {
            Domain::Difference { a, b } | Domain::Intersection { a, b } => 1 + a.depth().max(b.depth()),
            Domain::Union { parts } => 1 + parts.iter().map(Domain::depth).max().unwrap_or(0),
            Domain::BallCloud(_) => 1,
            _ => 0,
        }
    }

    /// `k` points on the boundary, covering every boundary component.
    pub fn boundary_sample(&self, k: usize) -> Result<Vec<Point>> {
        if k < 4 {
            return Err(Error::InvalidArgument(format!(
                "boundary_sample needs at least 4 points, got {k}"
            )));
        }
        let n = self.dim()?;
        let depth = self.depth();
        if depth > MAX_SAMPLING_DEPTH {
            return Err(Error::UnsupportedNesting(depth));
        }
        match self {
            Domain::Ball { center, radius } => Ok(sphere_points(center, *radius, k)),
            Domain::Annulus {
                center,
                inner,
                outer,
            } => {
                if *inner == 0.0 {
                    // Punctured ball: the center is a boundary component.
                    let mut pts = sphere_points(center, *outer, k - 1);
                    pts.push(*center);
                    return Ok(pts);
                }
                let k_in = k / 2;
                let mut pts = sphere_points(center, *inner, k_in);
                pts.extend(sphere_points(center, *outer, k - k_in));
                Ok(pts)
            }
            Domain::Polydisc { center, radii } => {
                if n == 1 {
                    return Ok(sphere_points(center, radii[0], k));
                }
                let half = k / 2;
                let mut pts = Vec::with_capacity(k);
                for (face, count) in [(0usize, half), (1usize, k - half)] {
                    for j in 0..count {
                        let (u1, u2, u3) = r3(j);
                        let t = (j as f64 + 0.5) / count as f64;
                        let on_face = Complex64::from_polar(radii[face], 2.0 * PI * t);
                        let other = Complex64::from_polar(radii[1 - face] * u3.sqrt(), 2.0 * PI * (u1 + u2));
                        let mut z = [Complex64::new(0.0, 0.0); 2];
                        z[face] = on_face;
                        z[1 - face] = other;
                        pts.push(Point::c2(center.coord(0) + z[0], center.coord(1) + z[1]));
                    }
                }
                Ok(pts)
            }
            Domain::SlitDisc {
                center,
                radius,
                slit,
            } => {
                let c = center.coord(0);
                // Clip the slit to the closed disc before allocating points to it.
                let (a, b) = clip_segment(slit[0], slit[1], c, *radius);
                let slit_len = (b - a).norm();
                let circle_len = 2.0 * PI * radius;
                let mut k_slit = ((k as f64) * 2.0 * slit_len / (circle_len + 2.0 * slit_len)).round() as usize;
                if slit_len > 0.0 {
                    k_slit = k_slit.clamp(2, k - 4);
                } else {
                    k_slit = 0;
                }
                let mut pts = sphere_points(center, *radius, k - k_slit);
                for j in 0..k_slit {
                    let t = j as f64 / (k_slit - 1).max(1) as f64;
                    pts.push(Point::c1(a + (b - a) * t));
                }
                Ok(pts)
            }
            Domain::CuspRegion {
                apex,
                x_max,
                steepness,
            } => {
                let h_end = (-steepness / x_max).exp();
                let curve_len = arc_length(|x| (-steepness / x).exp(), *x_max, 512);
                let total = 2.0 * curve_len + 2.0 * h_end;
                let k_side = ((k as f64) * 2.0 * h_end / total).round().max(1.0) as usize;
                let k_curve = (k - k_side - 1) / 2;
                let k_lower = k - k_side - 1 - k_curve;
                let mut pts = vec![Point::c1(*apex)];
                for (count, sign) in [(k_curve, 1.0), (k_lower, -1.0)] {
                    for j in 1..=count {
                        let x = x_max * j as f64 / count as f64;
                        let y = sign * (-steepness / x).exp();
                        pts.push(Point::c1(apex + Complex64::new(x, y)));
                    }
                }
                for j in 0..k_side {
                    let y = h_end * (2.0 * (j as f64 + 0.5) / k_side as f64 - 1.0);
                    pts.push(Point::c1(apex + Complex64::new(*x_max, y)));
                }
                Ok(pts)
            }
            Domain::Difference { a, b } | Domain::Intersection { a, b } => {
                self.filtered_boundary(&[a.as_ref(), b.as_ref()], k)
            }
            Domain::Union { parts } => {
                let refs: Vec<&Domain> = parts.iter().collect();
                self.filtered_boundary(&refs, k)
            }
            Domain::BallCloud(cloud) => {
                let balls: Vec<Domain> = cloud
                    .points
                    .iter()
                    .map(|c| Domain::ball(*c, cloud.radius))
                    .collect();
                let refs: Vec<&Domain> = balls.iter().collect();
                self.filtered_boundary(&refs, k)
            }
        }
    }

    /// Boundary of a composite: child boundary points where the composite margin vanishes.
    fn filtered_boundary(&self, children: &[&Domain], k: usize) -> Result<Vec<Point>> {
        let scale = 1.0 + self.extent();
        for factor in [4usize, 16, 64] {
            let per_child = (factor * k / children.len()).max(8);
            let mut candidates = Vec::new();
            for child in children {
                for q in child.boundary_sample(per_child)? {
                    if self.margin_unchecked(&q).abs() <= 1e-9 * scale {
                        candidates.push(q);
                    }
                }
            }
            if candidates.len() >= k {
                let m = candidates.len();
                return Ok((0..k).map(|i| candidates[i * m / k]).collect());
            }
        }
        Err(Error::InvalidArgument(
            "composite boundary too small to sample".into(),
        ))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

/// Euclidean distance from `z` to the closed segment `[a, b]`.
pub fn segment_distance(z: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let t = ((z - a) * ab.conj()).re / len2;
    let t = t.clamp(0.0, 1.0);
    (z - (a + ab * t)).norm()
}

fn clip_segment(a: Complex64, b: Complex64, c: Complex64, r: f64) -> (Complex64, Complex64) {
    let inside = |t: f64| ((a + (b - a) * t) - c).norm() <= r;
    let n = 4096;
    let ts: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).filter(|t| inside(*t)).collect();
    match (ts.first(), ts.last()) {
        (Some(t0), Some(t1)) => (a + (b - a) * *t0, a + (b - a) * *t1),
        _ => (a, a),
    }
}

fn arc_length(h: impl Fn(f64) -> f64, x_max: f64, steps: usize) -> f64 {
    let mut len = 0.0;
    let mut prev = (0.0, 0.0);
    for i in 1..=steps {
        let x = x_max * i as f64 / steps as f64;
        let cur = (x, h(x));
        len += (cur.0 - prev.0).hypot(cur.1 - prev.1);
        prev = cur;
    }
    len
}

/// Additive recurrence with the plastic-number family of irrationals; a
/// deterministic low-discrepancy sequence on the unit cube.
pub(crate) fn r3(j: usize) -> (f64, f64, f64) {
    const G: f64 = 1.220_744_084_605_759_5;
    let a1 = 1.0 / G;
    let a2 = 1.0 / (G * G);
    let a3 = 1.0 / (G * G * G);
    let j = j as f64;
    ((0.5 + a1 * j).fract(), (0.5 + a2 * j).fract(), (0.5 + a3 * j).fract())
}

/// `k` points on the sphere of radius `r` about `c` (a circle when n = 1).
fn sphere_points(c: &Point, r: f64, k: usize) -> Vec<Point> {
    (0..k)
        .map(|j| {
            if c.dim() == 1 {
                let th = 2.0 * PI * j as f64 / k as f64;
                Point::c1(c.coord(0) + Complex64::from_polar(r, th))
            } else {
                let (u1, u2, _) = r3(j);
                let t = (j as f64 + 0.5) / k as f64;
                let z1 = Complex64::from_polar(r * t.sqrt(), 2.0 * PI * u1);
                let z2 = Complex64::from_polar(r * (1.0 - t).sqrt(), 2.0 * PI * u2);
                Point::c2(c.coord(0) + z1, c.coord(1) + z2)
            }
        })
        .collect()
}

/// Union of open balls of a common radius around a point cloud, with a bucket
/// index on the first complex coordinate for nearest-neighbour queries.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "BallCloudSpec", into = "BallCloudSpec")]
pub struct BallCloud {
    points: Vec<Point>,
    radius: f64,
    dim: usize,
    cell: f64,
    origin: (f64, f64),
    shape: (usize, usize),
    buckets: Vec<Vec<u32>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BallCloudSpec {
    points: Vec<Point>,
    radius: f64,
}

impl From<BallCloudSpec> for BallCloud {
    fn from(s: BallCloudSpec) -> Self {
        BallCloud::new(s.points, s.radius)
    }
}

impl From<BallCloud> for BallCloudSpec {
    fn from(c: BallCloud) -> Self {
        BallCloudSpec {
            points: c.points,
            radius: c.radius,
        }
    }
}

impl BallCloud {
    /// Panics if `points` is empty or of mixed dimension; use [`Domain::dim`] to validate
    /// deserialized input.
    pub fn new(points: Vec<Point>, radius: f64) -> Self {
        assert!(!points.is_empty(), "ball cloud needs at least one point");
        let dim = points[0].dim();
        assert!(points.iter().all(|p| p.dim() == dim), "mixed dimensions in ball cloud");
        let cell = radius.max(1e-12);
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &points {
            let z = p.coord(0);
            x0 = x0.min(z.re);
            y0 = y0.min(z.im);
            x1 = x1.max(z.re);
            y1 = y1.max(z.im);
        }
        let nx = (((x1 - x0) / cell).floor() as usize + 1).min(1 << 12);
        let ny = (((y1 - y0) / cell).floor() as usize + 1).min(1 << 12);
        let cell = cell.max((x1 - x0) / nx as f64).max((y1 - y0) / ny as f64);
        let mut buckets = vec![Vec::new(); nx * ny];
        let mut cloud = BallCloud {
            points,
            radius,
            dim,
            cell,
            origin: (x0, y0),
            shape: (nx, ny),
            buckets: Vec::new(),
        };
        for (i, p) in cloud.points.iter().enumerate() {
            let (ix, iy) = cloud.cell_of(p.coord(0));
            buckets[ix as usize * ny + iy as usize].push(i as u32);
        }
        cloud.buckets = buckets;
        cloud
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn cell_of(&self, z: Complex64) -> (i64, i64) {
        let ix = ((z.re - self.origin.0) / self.cell).floor() as i64;
        let iy = ((z.im - self.origin.1) / self.cell).floor() as i64;
        (
            ix.clamp(0, self.shape.0 as i64 - 1),
            iy.clamp(0, self.shape.1 as i64 - 1),
        )
    }

    /// Distance from `p` to the nearest cloud point.
    pub fn nearest_distance(&self, p: &Point) -> f64 {
        let z = p.coord(0);
        let (cx, cy) = self.cell_of(z);
        let (nx, ny) = (self.shape.0 as i64, self.shape.1 as i64);
        // Planar distance from z to the grid block, so that ring bounds stay valid
        // for queries outside the indexed rectangle.
        let bx = (self.origin.0 - z.re).max(z.re - (self.origin.0 + nx as f64 * self.cell)).max(0.0);
        let by = (self.origin.1 - z.im).max(z.im - (self.origin.1 + ny as f64 * self.cell)).max(0.0);
        let outside = bx.hypot(by);
        let mut best = f64::INFINITY;
        let max_ring = nx.max(ny);
        for ring in 0..=max_ring {
            for ix in (cx - ring).max(0)..=(cx + ring).min(nx - 1) {
                for iy in (cy - ring).max(0)..=(cy + ring).min(ny - 1) {
                    if (ix - cx).abs() != ring && (iy - cy).abs() != ring {
                        continue;
                    }
                    for &i in &self.buckets[(ix * ny + iy) as usize] {
                        let d = self.points[i as usize].dist(p);
                        if d < best {
                            best = d;
                        }
                    }
                }
            }
            // Unvisited points are at least `ring * cell` away in the plane.
            if best <= outside.hypot(ring as f64 * self.cell) {
                break;
            }
        }
        best
    }
}

/// A rectangular grid over the real coordinates of C^n, restricted to a domain.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// One closed interval per real coordinate, in the order (re z1, im z1, re z2, im z2).
    pub bounds: Vec<[f64; 2]>,
    /// Node count per real coordinate.
    pub resolution: Vec<usize>,
    pub restriction: Domain,
}

/// One grid node of [`make_grid`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridNode {
    pub index: usize,
    pub point: Point,
    pub interior: bool,
}

impl GridSpec {
    pub fn new(bounds: Vec<[f64; 2]>, resolution: Vec<usize>, restriction: Domain) -> Self {
        Self {
            bounds,
            resolution,
            restriction,
        }
    }

    /// Square box `[lo, hi]^(2n)` with `res` nodes per axis.
    pub fn cube(dim: usize, lo: f64, hi: f64, res: usize, restriction: Domain) -> Self {
        Self::new(vec![[lo, hi]; 2 * dim], vec![res; 2 * dim], restriction)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len() / 2
    }

    pub fn node_count(&self) -> usize {
        self.resolution.iter().product()
    }

    /// Grid step along each real axis.
    pub fn steps(&self) -> Vec<f64> {
        self.bounds
            .iter()
            .zip(&self.resolution)
            .map(|(b, &r)| (b[1] - b[0]) / (r - 1) as f64)
            .collect()
    }

    /// Largest step over all axes.
    pub fn max_step(&self) -> f64 {
        self.steps().into_iter().fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.restriction.dim()?;
        if self.bounds.len() != 2 * n || self.resolution.len() != 2 * n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.bounds.len() / 2,
            });
        }
        for (b, &r) in self.bounds.iter().zip(&self.resolution) {
            if r < 2 {
                return Err(Error::InvalidArgument(format!("grid resolution {r} < 2")));
            }
            if !(b[1] > b[0]) {
                return Err(Error::InvalidArgument(format!("empty grid interval {b:?}")));
            }
        }
        Ok(())
    }

    /// Multi-index of node `index` in row-major order (last axis fastest).
    pub fn unravel(&self, mut index: usize) -> [usize; 4] {
        let mut idx = [0usize; 4];
        for axis in (0..self.resolution.len()).rev() {
            idx[axis] = index % self.resolution[axis];
            index /= self.resolution[axis];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.resolution)
            .fold(0, |acc, (&i, &r)| acc * r + i)
    }

    pub fn node_point(&self, index: usize) -> Point {
        let idx = self.unravel(index);
        let mut x = [0.0; 4];
        for (axis, b) in self.bounds.iter().enumerate() {
            let r = self.resolution[axis];
            x[axis] = b[0] + (b[1] - b[0]) * idx[axis] as f64 / (r - 1) as f64;
        }
        Point::from_reals(&x[..self.bounds.len()]).expect("grid dimension validated")
    }
}

/// Enumerates the grid in row-major order with interior flags from the restriction.
pub fn make_grid(g: &GridSpec) -> Result<Vec<GridNode>> {
    g.validate()?;
    let nodes: Vec<GridNode> = (0..g.node_count())
        .map(|index| {
            let point = g.node_point(index);
            GridNode {
                index,
                point,
                interior: g.restriction.contains_unchecked(&point),
            }
        })
        .collect();
    if !nodes.iter().any(|n| n.interior) {
        return Err(Error::EmptyGrid);
    }
    Ok(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn catalog() -> Vec<Domain> {
        let o1 = Point::real(0.0);
        let o2 = Point::origin(2).unwrap();
        vec![
            Domain::ball(o1, 1.0),
            Domain::ball(o2, 1.0),
            Domain::annulus(o1, 0.5, 1.0),
            Domain::annulus(o2, 0.3, 0.9),
            Domain::polydisc(o2, vec![0.5, 0.8]),
            Domain::slit_disc(c(0.0, 0.0), 1.0, c(0.0, 0.0), c(1.0, 0.0)),
            Domain::cusp(0.5),
            Domain::difference(Domain::ball(o1, 1.0), Domain::ball(o1, 0.5)),
            Domain::intersection(Domain::ball(o1, 1.0), Domain::ball(Point::real(0.5), 0.8)),
            Domain::union(vec![
                Domain::ball(Point::real(-0.5), 0.2),
                Domain::ball(Point::real(0.5), 0.2),
            ]),
            Domain::BallCloud(BallCloud::new(
                (0..50).map(|k| Point::real(k as f64 / 49.0)).collect(),
                0.05,
            )),
        ]
    }

    fn random_point(rng: &mut ChaCha8Rng, n: usize) -> Point {
        let x: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.3..1.3)).collect();
        Point::from_reals(&x).unwrap()
    }

    #[test]
    fn contains_matches_margin_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in catalog() {
            let n = d.dim().unwrap();
            for _ in 0..10_000 {
                let p = random_point(&mut rng, n);
                let m = d.signed_margin(&p).unwrap();
                if m.abs() > 1e-12 {
                    assert_eq!(d.contains(&p).unwrap(), m > 0.0, "{d:?} at {p:?}");
                }
            }
        }
    }

    #[test]
    fn margin_balls_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for d in catalog() {
            let n = d.dim().unwrap();
            let mut checked = 0;
            while checked < 300 {
                let p = random_point(&mut rng, n);
                let m = d.signed_margin(&p).unwrap();
                if m <= 0.0 {
                    continue;
                }
                checked += 1;
                for _ in 0..10 {
                    let dir = random_point(&mut rng, n);
                    let q = p + dir * (m * (1.0 - 1e-9) * rng.random::<f64>() / dir.norm());
                    assert!(d.contains(&q).unwrap(), "{d:?}: {p:?} margin {m}, {q:?}");
                }
            }
        }
    }

    #[test]
    fn contains_examples() {
        let b1 = Domain::ball(Point::real(0.0), 1.0);
        assert!(b1.contains(&Point::real(0.5)).unwrap());
        let b05 = Domain::ball(Point::real(0.0), 0.5);
        assert!(!b05.contains(&Point::real(0.5)).unwrap());
        let cusp = Domain::cusp(0.5);
        // exp(-1/0.2) ~ 0.00674 > 0.001
        assert!(cusp.contains(&Point::c1(c(0.2, 0.001))).unwrap());
        assert!(!cusp.contains(&Point::c1(c(0.2, 0.007))).unwrap());
    }

    #[test]
    fn margin_examples() {
        let b1 = Domain::ball(Point::real(0.0), 1.0);
        assert_eq!(b1.signed_margin(&Point::real(0.25)).unwrap(), 0.75);
        let ann = Domain::annulus(Point::real(0.0), 0.5, 1.0);
        assert_eq!(ann.signed_margin(&Point::real(0.75)).unwrap(), 0.25);
        let diff = Domain::difference(b1, Domain::ball(Point::real(0.0), 0.5));
        assert!((diff.signed_margin(&Point::real(0.6)).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let b = Domain::ball(Point::real(0.0), 1.0);
        let p = Point::origin(2).unwrap();
        assert!(matches!(b.contains(&p), Err(Error::DimensionMismatch { .. })));
        assert!(b.signed_margin(&p).is_err());
        let bad = Domain::difference(b, Domain::ball(p, 1.0));
        assert!(bad.dim().is_err());
    }

    #[test]
    fn boundary_examples() {
        let b = Domain::ball(Point::real(0.0), 1.0);
        let pts = b.boundary_sample(4).unwrap();
        let expect = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        for (p, e) in pts.iter().zip(expect) {
            assert!((p.coord(0) - e).norm() < 1e-15);
        }
        let ann = Domain::annulus(Point::real(0.0), 0.5, 1.0);
        let pts = ann.boundary_sample(8).unwrap();
        assert_eq!(pts.iter().filter(|p| (p.norm() - 0.5).abs() < 1e-15).count(), 4);
        assert_eq!(pts.iter().filter(|p| (p.norm() - 1.0).abs() < 1e-15).count(), 4);
        let b2 = Domain::ball(Point::origin(2).unwrap(), 1.0);
        let pts = b2.boundary_sample(100).unwrap();
        assert_eq!(pts.len(), 100);
        let worst = pts.iter().map(|p| (p.norm() - 1.0).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-12);
    }

    #[test]
    fn boundary_samples_have_small_margin() {
        for d in catalog() {
            let k = 256;
            let pts = d.boundary_sample(k).unwrap();
            assert_eq!(pts.len(), k, "{d:?}");
            let step = 2.0 * PI * d.extent() / k as f64;
            for p in &pts {
                let m = d.signed_margin(p).unwrap();
                assert!(m.abs() <= 2.0 * step, "{d:?}: {p:?} margin {m}");
            }
        }
    }

    #[test]
    fn composite_boundary_covers_components() {
        let two = Domain::union(vec![
            Domain::ball(Point::real(-0.5), 0.2),
            Domain::ball(Point::real(0.5), 0.2),
        ]);
        let pts = two.boundary_sample(64).unwrap();
        assert!(pts.iter().any(|p| p.coord(0).re < 0.0));
        assert!(pts.iter().any(|p| p.coord(0).re > 0.0));
        let ring = Domain::difference(
            Domain::ball(Point::real(0.0), 1.0),
            Domain::ball(Point::real(0.0), 0.5),
        );
        let pts = ring.boundary_sample(64).unwrap();
        assert!(pts.iter().any(|p| (p.norm() - 0.5).abs() < 1e-12));
        assert!(pts.iter().any(|p| (p.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn deep_nesting_is_rejected() {
        let b = |r| Domain::ball(Point::real(0.0), r);
        let d = Domain::difference(Domain::difference(Domain::difference(b(1.0), b(0.1)), b(0.2)), b(0.3));
        assert_eq!(d.boundary_sample(16).unwrap_err(), Error::UnsupportedNesting(3));
    }

    #[test]
    fn grid_examples() {
        let g = GridSpec::cube(1, -1.0, 1.0, 3, Domain::ball(Point::real(0.0), 1.0));
        let nodes = make_grid(&g).unwrap();
        assert_eq!(nodes.len(), 9);
        // Only the center lies strictly inside; the edge midpoints sit on the circle.
        assert_eq!(nodes.iter().filter(|n| n.interior).count(), 1);
        let whole = GridSpec::cube(1, -1.0, 1.0, 8, Domain::polydisc(Point::real(0.0), vec![2.0]));
        assert_eq!(make_grid(&whole).unwrap().iter().filter(|n| n.interior).count(), 64);
        let far = GridSpec::cube(1, -1.0, 1.0, 8, Domain::ball(Point::real(3.0), 0.1));
        assert_eq!(make_grid(&far).unwrap_err(), Error::EmptyGrid);
    }

    #[test]
    fn grid_is_row_major_and_deterministic() {
        let g = GridSpec::cube(2, -1.0, 1.0, 8, Domain::ball(Point::origin(2).unwrap(), 1.0));
        let a = make_grid(&g).unwrap();
        let b = make_grid(&g).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[1].point.real_coord(3), -1.0 + 2.0 / 7.0);
        assert_eq!(g.ravel(&g.unravel(1234)), 1234);
    }

    #[test]
    fn domain_json_round_trip() {
        for d in catalog() {
            let s = serde_json::to_string(&d).unwrap();
            let back: Domain = serde_json::from_str(&s).unwrap();
            assert_eq!(s, serde_json::to_string(&back).unwrap());
        }
    }

    #[test]
    fn ball_cloud_nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point> = (0..300)
            .map(|_| Point::c1(c(rng.random_range(0.0..1.0), rng.random_range(-0.1..0.1))))
            .collect();
        let cloud = BallCloud::new(pts.clone(), 0.01);
        for _ in 0..2000 {
            let p = Point::c1(c(rng.random_range(-0.5..1.5), rng.random_range(-0.5..0.5)));
            let brute = pts.iter().map(|q| q.dist(&p)).fold(f64::INFINITY, f64::min);
            assert!((cloud.nearest_distance(&p) - brute).abs() < 1e-15);
        }
    }
}
