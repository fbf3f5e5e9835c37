//! Grid relaxation for the largest plurisubharmonic minorant of an obstacle:
//! `u <- min(u, min over complex lines and radii of circle averages of u)`,
//! started from the obstacle and iterated with two buffers until the largest
//! change falls below a tolerance.
//!
//! Circle samples are interpolated multilinearly from interior nodes. A sample
//! whose interpolation cell touches a node outside the grid's restriction is
//! interpolated along the inward normal between an interior point and the
//! boundary value: the obstacle for envelopes, `0` for relative extremal
//! functions. Samples outside the grid box take the same values directly.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{make_grid, r3, Domain, GridSpec};
use crate::error::{Error, Result};
use crate::objective::PiecewiseObjective;
use crate::point::Point;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxConfig {
    /// Circle radii in grid steps, capped per node by the margin to the boundary of `X`.
    pub radii_steps: Vec<f64>,
    /// Complex directions sampled on the projective line for n = 2, in addition
    /// to the two coordinate axes.
    pub directions: usize,
    /// Angular nodes per circle.
    pub angles: usize,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        Self {
            radii_steps: vec![1.0, 2.0, 4.0],
            directions: 32,
            angles: 16,
            tolerance: 1e-6,
            max_sweeps: 100_000,
        }
    }
}

impl RelaxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radii_steps.is_empty() || self.radii_steps.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidArgument("radii must be positive".into()));
        }
        if self.angles < 4 || !(self.tolerance > 0.0) || self.max_sweeps == 0 {
            return Err(Error::InvalidArgument(
                "need >= 4 angles, a positive tolerance and at least one sweep".into(),
            ));
        }
        Ok(())
    }

    /// Unit directions of complex lines in C^n.
    pub fn line_directions(&self, n: usize) -> Vec<Point> {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        if n == 1 {
            return vec![Point::c1(one)];
        }
        let mut out = vec![Point::c2(one, zero), Point::c2(zero, one)];
        // Fibonacci points on the sphere, mapped to the projective line.
        let golden = PI * (3.0 - 5f64.sqrt());
        for k in 0..self.directions {
            let cos_polar = 1.0 - 2.0 * (k as f64 + 0.5) / self.directions as f64;
            let t = 0.5 * cos_polar.clamp(-1.0, 1.0).acos();
            let psi = golden * k as f64;
            out.push(Point::c2(Complex64::new(t.cos(), 0.0), Complex64::from_polar(t.sin(), psi)));
        }
        out
    }
}

/// One circle average: `constant + sum w_k u[i_k]`.
#[derive(Clone, Debug, Default)]
struct Average {
    terms: Vec<(u32, f64)>,
    constant: f64,
}

#[derive(Clone, Debug)]
enum Stencil {
    /// Translation-invariant averages with relative offsets.
    Standard,
    Custom(Vec<Average>),
}

/// Relaxed values on the interior nodes of a grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeGrid {
    pub grid: GridSpec,
    /// Row-major node indices of the interior nodes.
    pub nodes: Vec<usize>,
    #[serde(with = "ext_vec")]
    pub values: Vec<f64>,
    pub sweeps: usize,
    pub residual: f64,
    pub converged: bool,
}

mod ext_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct E(#[serde(with = "crate::ext")] f64);

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| E(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<E>::deserialize(d)?.into_iter().map(|e| e.0).collect())
    }
}

/// JSON metadata of a relaxation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxSummary {
    pub sweeps: usize,
    pub residual: f64,
    pub converged: bool,
    pub interior_nodes: usize,
}

impl EnvelopeGrid {
    pub fn summary(&self) -> RelaxSummary {
        RelaxSummary {
            sweeps: self.sweeps,
            residual: self.residual,
            converged: self.converged,
            interior_nodes: self.nodes.len(),
        }
    }

    pub fn point(&self, k: usize) -> Point {
        self.grid.node_point(self.nodes[k])
    }

    /// Position of the interior node nearest to `p` and its distance.
    pub fn nearest(&self, p: &Point) -> Option<(usize, f64)> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(k, &i)| (k, self.grid.node_point(i).dist(p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Value at the interior node nearest to `p`, refusing nodes more than two
    /// grid steps away.
    pub fn value_near(&self, p: &Point) -> Result<f64> {
        let (k, dist) = self.nearest(p).ok_or(Error::EmptyGrid)?;
        let step = self.grid.max_step();
        if dist > 2.0 * step {
            return Err(Error::RefineGrid { distance: dist, step });
        }
        Ok(self.values[k])
    }

    /// Multilinear interpolation at `p` when every corner of its cell is interior.
    pub fn interpolate(&self, p: &Point) -> Option<f64> {
        let mut lookup = vec![u32::MAX; self.grid.node_count()];
        for (k, &i) in self.nodes.iter().enumerate() {
            lookup[i] = k as u32;
        }
        let dims = self.grid.bounds.len();
        let coords: Vec<f64> = (0..dims).map(|a| p.real_coord(a)).collect();
        let cell = Cell::locate(&self.grid, &coords)?;
        let mut acc = 0.0;
        for (i, w) in cell.corners(&self.grid) {
            let k = lookup[i];
            if k == u32::MAX {
                return None;
            }
            acc += w * self.values[k as usize];
        }
        Some(acc)
    }

    /// Value of an envelope of `obj` at `p`: multilinear inside one side of
    /// `dW`, and along the normal towards the interface or boundary value when
    /// the cell of `p` straddles `dW` or leaves `X`.
    pub fn evaluate(&self, obj: &PiecewiseObjective, p: &Point) -> Option<f64> {
        let mut lookup = vec![u32::MAX; self.grid.node_count()];
        for (k, &i) in self.nodes.iter().enumerate() {
            lookup[i] = k as u32;
        }
        let dims = self.grid.bounds.len();
        let h = self.grid.max_step();
        let w = obj.w();
        let interior = |q: &Point| -> Option<Vec<(usize, f64)>> {
            let coords: Vec<f64> = (0..dims).map(|a| q.real_coord(a)).collect();
            let cs = Cell::locate(&self.grid, &coords)?.corners(&self.grid);
            cs.iter().all(|(i, _)| lookup[*i] != u32::MAX).then_some(cs)
        };
        let on_side = |i: usize, want: bool| (w.margin_unchecked(&self.grid.node_point(i)) > 0.0) == want;
        let value = |(cs, c): (Vec<(usize, f64)>, f64)| {
            c + cs.iter().map(|(i, wt)| wt * self.values[lookup[*i] as usize]).sum::<f64>()
        };
        let phi = |b: &Point| obj.eval_phi_in_x(b).unwrap_or(f64::INFINITY);
        let lsc = |b: &Point| lsc_value(obj, b);
        match interior(p) {
            Some(cs) => {
                let want = w.margin_unchecked(p) > 0.0;
                if obj.is_glued() || cs.iter().all(|(i, _)| on_side(*i, want)) {
                    return Some(value((cs, 0.0)));
                }
                let sign = if want { 1.0 } else { -1.0 };
                let m = |q: &Point| sign * w.margin_unchecked(q);
                let one_sided = |q: &Point| interior(q).filter(|cs| cs.iter().all(|(i, _)| on_side(*i, want)));
                Some(value(along_normal(&m, p, h, &one_sided, &lsc).unwrap_or((cs, 0.0))))
            }
            None => {
                let m = |q: &Point| self.grid.restriction.margin_unchecked(q);
                along_normal(&m, p, h, &interior, &phi).map(value)
            }
        }
    }

    /// CSV with columns `index, x0, x1, ..., value`, preceded by `# schema=1`.
    pub fn to_csv(&self) -> String {
        let dims = self.grid.bounds.len();
        let mut out = String::from("# schema=1\nindex");
        for a in 0..dims {
            let _ = write!(out, ",x{a}");
        }
        out.push_str(",value\n");
        for (k, &i) in self.nodes.iter().enumerate() {
            let p = self.grid.node_point(i);
            let _ = write!(out, "{i}");
            for a in 0..dims {
                let _ = write!(out, ",{:?}", p.real_coord(a));
            }
            let _ = writeln!(out, ",{}", crate::ext::format(self.values[k]));
        }
        out
    }
}

/// Interpolation cell of a point: lower corner indices and fractional offsets.
struct Cell {
    lower: [usize; 4],
    frac: [f64; 4],
    dims: usize,
}

impl Cell {
    fn locate(g: &GridSpec, x: &[f64]) -> Option<Cell> {
        let steps = g.steps();
        let mut cell = Cell {
            lower: [0; 4],
            frac: [0.0; 4],
            dims: x.len(),
        };
        for a in 0..x.len() {
            let t = (x[a] - g.bounds[a][0]) / steps[a];
            let last = (g.resolution[a] - 1) as f64;
            if !(t >= -1e-9 && t <= last + 1e-9) {
                return None;
            }
            let t = t.clamp(0.0, last);
            let i0 = (t.floor() as usize).min(g.resolution[a] - 2);
            cell.lower[a] = i0;
            cell.frac[a] = t - i0 as f64;
        }
        Some(cell)
    }

    /// Corners with nonzero weight.
    fn corners(&self, g: &GridSpec) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(1 << self.dims);
        for mask in 0..(1usize << self.dims) {
            let mut w = 1.0;
            let mut idx = [0usize; 4];
            for a in 0..self.dims {
                let up = mask >> a & 1 == 1;
                w *= if up { self.frac[a] } else { 1.0 - self.frac[a] };
                idx[a] = self.lower[a] + up as usize;
            }
            if w > 0.0 {
                out.push((g.ravel(&idx[..self.dims]), w));
            }
        }
        out
    }
}

/// Stencils and obstacle on a grid, ready to sweep.
struct Problem {
    grid: GridSpec,
    nodes: Vec<usize>,
    obstacle: Vec<f64>,
    stencils: Vec<Stencil>,
    /// Relative offsets (in row-major index space) of the standard averages.
    standard: Vec<Vec<(isize, f64)>>,
}

/// Closures describing an obstacle problem on a grid.
pub struct ObstacleProblem<'a> {
    pub obstacle: &'a (dyn Fn(&Point) -> f64 + Sync),
    /// Value used at boundary points of the grid's restriction.
    pub boundary_value: &'a (dyn Fn(&Point) -> f64 + Sync),
    /// Value used at circle samples outside the grid box.
    pub outside_value: &'a (dyn Fn(&Point) -> f64 + Sync),
    /// Hypersurface across which the obstacle jumps.
    pub interface: Option<Interface<'a>>,
}

/// A jump set of the obstacle, given by a margin (positive on one side) and a
/// value used on it. Samples whose cells straddle it are interpolated along its
/// normal instead of across it.
pub struct Interface<'a> {
    pub margin: &'a (dyn Fn(&Point) -> f64 + Sync),
    pub value: &'a (dyn Fn(&Point) -> f64 + Sync),
}

fn build_problem(grid: &GridSpec, prob: &ObstacleProblem, cfg: &RelaxConfig) -> Result<Problem> {
    cfg.validate()?;
    let nodes_info = make_grid(grid)?;
    let x = &grid.restriction;
    let n = x.dim()?;
    let dims = grid.bounds.len();
    let h = grid.max_step();
    let dirs = cfg.line_directions(n);
    let angles: Vec<Complex64> = (0..cfg.angles)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / cfg.angles as f64))
        .collect();
    let mut lookup = vec![u32::MAX; grid.node_count()];
    let nodes: Vec<usize> = nodes_info.iter().filter(|g| g.interior).map(|g| g.index).collect();
    for (k, &i) in nodes.iter().enumerate() {
        lookup[i] = k as u32;
    }
    // Interface side of every grid node.
    let side: Vec<bool> = match &prob.interface {
        Some(f) => nodes_info.par_iter().map(|g| (f.margin)(&g.point) > 0.0).collect(),
        None => Vec::new(),
    };
    let r_max = cfg.radii_steps.iter().cloned().fold(0.0, f64::max) * h;
    let reach = r_max + h * (dims as f64).sqrt() * 1.01;
    let pad = (reach / grid.steps().iter().cloned().fold(f64::INFINITY, f64::min)).ceil() as usize + 1;

    let x_margin = |p: &Point| x.margin_unchecked(p);
    let interior_terms = |q: &Point| -> Option<Vec<(usize, f64)>> {
        let coords: Vec<f64> = (0..dims).map(|k| q.real_coord(k)).collect();
        let cs = Cell::locate(grid, &coords)?.corners(grid);
        cs.iter().all(|(i, _)| lookup[*i] != u32::MAX).then_some(cs)
    };
    let one_sided = |q: &Point, want: bool| -> Option<Vec<(usize, f64)>> {
        let cs = interior_terms(q)?;
        cs.iter().all(|(i, _)| side[*i] == want).then_some(cs)
    };
    let sample = |q: &Point| -> (Vec<(usize, f64)>, f64) {
        match interior_terms(q) {
            Some(cs) => match &prob.interface {
                Some(f) if !cs.iter().all(|(i, _)| side[*i] == side[cs[0].0]) => {
                    let want = (f.margin)(q) > 0.0;
                    let sign = if want { 1.0 } else { -1.0 };
                    let m = |p: &Point| sign * (f.margin)(p);
                    along_normal(&m, q, h, &|p| one_sided(p, want), f.value).unwrap_or((cs, 0.0))
                }
                _ => (cs, 0.0),
            },
            None => along_normal(&x_margin, q, h, &interior_terms, prob.boundary_value)
                .unwrap_or_else(|| (Vec::new(), (prob.outside_value)(q))),
        }
    };

    // Averages of a node's lines and radii as (index, weight) lists plus a constant.
    let averages = |p: &Point, margin: f64| -> Vec<Average> {
        let mut out = Vec::new();
        for &rs in &cfg.radii_steps {
            let r = (rs * h).min(margin);
            if !(r > 0.0) {
                continue;
            }
            for a in &dirs {
                let mut avg = Average::default();
                let wa = 1.0 / angles.len() as f64;
                for e in &angles {
                    let (terms, constant) = sample(&(*p + a.scale(*e * r)));
                    for (i, w) in terms {
                        avg.terms.push((lookup[i], w * wa));
                    }
                    avg.constant += wa * constant;
                }
                merge_terms(&mut avg.terms);
                out.push(avg);
            }
        }
        out
    };

    let is_standard = |i: usize, p: &Point, margin: f64| -> bool {
        if margin <= reach {
            return false;
        }
        if let Some(f) = &prob.interface {
            if (f.margin)(p).abs() <= reach {
                return false;
            }
        }
        let idx = grid.unravel(i);
        (0..dims).all(|a| idx[a] >= pad && idx[a] + pad < grid.resolution[a])
    };

    let built: Vec<(f64, bool)> = nodes
        .par_iter()
        .map(|&i| {
            let p = grid.node_point(i);
            ((prob.obstacle)(&p), is_standard(i, &p, x.margin_unchecked(&p)))
        })
        .collect();
    let stencils: Vec<Stencil> = nodes
        .par_iter()
        .zip(&built)
        .map(|(&i, &(_, standard))| {
            if standard {
                Stencil::Standard
            } else {
                let p = grid.node_point(i);
                Stencil::Custom(averages(&p, x.margin_unchecked(&p)))
            }
        })
        .collect();
    let obstacle_values = built.iter().map(|b| b.0).collect();

    // Relative offsets of the standard stencil, from any standard node.
    let mut standard = Vec::new();
    if let Some(k) = stencils.iter().position(|s| matches!(s, Stencil::Standard)) {
        let i = nodes[k];
        let p = grid.node_point(i);
        for avg in averages(&p, f64::INFINITY) {
            debug_assert_eq!(avg.constant, 0.0);
            standard.push(
                avg.terms
                    .iter()
                    .map(|(kk, w)| (nodes[*kk as usize] as isize - i as isize, *w))
                    .collect(),
            );
        }
    }
    let mut problem = Problem {
        grid: grid.clone(),
        nodes,
        obstacle: obstacle_values,
        stencils,
        standard,
    };
    problem.standard_to_positions(&lookup);
    Ok(problem)
}

/// Linear interpolation along the normal of the zero set of `margin` (positive
/// on the side of `q`): between `value` at the nearest zero and the first point
/// `q + t n`, `t` a multiple of `h/2`, whose cell is accepted by `terms`.
fn along_normal(
    margin: &dyn Fn(&Point) -> f64,
    q: &Point,
    h: f64,
    terms: &dyn Fn(&Point) -> Option<Vec<(usize, f64)>>,
    value: &(dyn Fn(&Point) -> f64 + Sync),
) -> Option<(Vec<(usize, f64)>, f64)> {
    let (b, inward, d) = project_to_zero(margin, q, h)?;
    for k in 1..=12 {
        let t = 0.5 * h * k as f64;
        if let Some(cs) = terms(&(*q + inward * t)) {
            let (wb, wi) = (t / (t + d), d / (t + d));
            let cs = if wi > 0.0 {
                cs.into_iter().map(|(i, w)| (i, w * wi)).collect()
            } else {
                Vec::new()
            };
            return Some((cs, wb * value(&b)));
        }
    }
    None
}

/// Nearest zero of `margin`, unit normal towards positive values and distance,
/// from two Newton steps with a central-difference gradient.
fn project_to_zero(margin: &dyn Fn(&Point) -> f64, q: &Point, h: f64) -> Option<(Point, Point, f64)> {
    let dims = 2 * q.dim();
    let eps = 1e-4 * h;
    let grad = |p: &Point| -> Option<(Point, f64)> {
        let mut g = [0.0; 4];
        let base: Vec<f64> = (0..dims).map(|k| p.real_coord(k)).collect();
        for k in 0..dims {
            let mut hi = base.clone();
            let mut lo = base.clone();
            hi[k] += eps;
            lo[k] -= eps;
            g[k] = (margin(&Point::from_reals(&hi).ok()?) - margin(&Point::from_reals(&lo).ok()?)) / (2.0 * eps);
        }
        let norm = g[..dims].iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-9) || !norm.is_finite() {
            return None;
        }
        let unit = Point::from_reals(&g[..dims].iter().map(|v| v / norm).collect::<Vec<_>>()).ok()?;
        Some((unit, norm))
    };
    let mut b = *q;
    let mut normal = None;
    for _ in 0..2 {
        let (unit, norm) = grad(&b)?;
        let m = margin(&b);
        if !m.is_finite() {
            return None;
        }
        b = b + unit * (-m / norm);
        normal = Some(unit);
    }
    let d = q.dist(&b);
    if d > 2.0 * h {
        return None;
    }
    Some((b, normal?, d))
}

fn merge_terms(terms: &mut Vec<(u32, f64)>) {
    terms.sort_by_key(|t| t.0);
    let mut merged: Vec<(u32, f64)> = Vec::with_capacity(terms.len());
    for &(i, w) in terms.iter() {
        match merged.last_mut() {
            Some(last) if last.0 == i => last.1 += w,
            _ => merged.push((i, w)),
        }
    }
    *terms = merged;
}

impl Problem {
    /// Standard offsets are kept in row-major index space; positions into the
    /// value vector differ by the same amount only when every node in between
    /// is interior, which holds inside the padded region used for standard nodes
    /// when the restriction is convex along grid lines. Rather than rely on
    /// that, standard nodes whose shifted neighbours are not interior become custom.
    fn standard_to_positions(&mut self, lookup: &[u32]) {
        if self.standard.is_empty() {
            return;
        }
        let n = self.grid.node_count() as isize;
        let standard = self.standard.clone();
        for k in 0..self.nodes.len() {
            if !matches!(self.stencils[k], Stencil::Standard) {
                continue;
            }
            let i = self.nodes[k] as isize;
            let mut custom = Vec::with_capacity(standard.len());
            for avg in &standard {
                let mut terms = Vec::with_capacity(avg.len());
                for &(off, w) in avg {
                    let j = i + off;
                    debug_assert!(j >= 0 && j < n);
                    let pos = lookup[j as usize];
                    debug_assert!(pos != u32::MAX);
                    terms.push((pos, w));
                }
                custom.push(Average { terms, constant: 0.0 });
            }
            self.stencils[k] = Stencil::Custom(custom);
        }
    }

    fn sweep(&self, old: &[f64], new: &mut [f64]) -> f64 {
        new.par_iter_mut()
            .enumerate()
            .map(|(k, out)| {
                let mut v = old[k];
                if let Stencil::Custom(avgs) = &self.stencils[k] {
                    for avg in avgs {
                        let mut s = avg.constant;
                        for &(j, w) in &avg.terms {
                            s += w * old[j as usize];
                        }
                        if s < v {
                            v = s;
                        }
                    }
                }
                v = v.min(self.obstacle[k]);
                *out = v;
                let d = old[k] - v;
                if d.is_nan() {
                    0.0
                } else {
                    d.abs()
                }
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Sweeps from `start` (which must lie between the solution and the
    /// obstacle); returns values, sweep count, last residual, convergence flag.
    fn run(&self, start: Vec<f64>, cfg: &RelaxConfig) -> (Vec<f64>, usize, f64, bool) {
        let mut old = start;
        let mut new = vec![0.0; old.len()];
        let mut residual = f64::INFINITY;
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < cfg.max_sweeps {
            residual = self.sweep(&old, &mut new);
            sweeps += 1;
            std::mem::swap(&mut old, &mut new);
            if residual < cfg.tolerance {
                converged = true;
                break;
            }
        }
        (old, sweeps, residual, converged)
    }

    fn solve(self, cfg: &RelaxConfig) -> EnvelopeGrid {
        let (values, sweeps, residual, converged) = self.run(self.obstacle.clone(), cfg);
        EnvelopeGrid {
            grid: self.grid,
            nodes: self.nodes,
            values,
            sweeps,
            residual,
            converged,
        }
    }
}

/// Relaxes an obstacle problem on the interior nodes of `grid`.
pub fn relax(grid: &GridSpec, prob: &ObstacleProblem, cfg: &RelaxConfig) -> Result<EnvelopeGrid> {
    Ok(build_problem(grid, prob, cfg)?.solve(cfg))
}

/// Largest plurisubharmonic minorant of `phi` on `grid` (restricted to `X`).
///
/// Unless the pieces are glued, `dW` is treated as an interface carrying
/// `min(phi1, phi2, phi)`, the lower semicontinuous regularization of `phi` there.
pub fn psh_envelope(obj: &PiecewiseObjective, grid: &GridSpec, cfg: &RelaxConfig) -> Result<EnvelopeGrid> {
    check_grid(obj.dim(), grid)?;
    if !same_domain(&grid.restriction, obj.x()) {
        return Err(Error::InvalidArgument("grid restriction must be X".into()));
    }
    for node in make_grid(grid)?.iter().filter(|g| g.interior) {
        obj.eval_phi(&node.point)?;
    }
    let phi = |p: &Point| obj.eval_phi_in_x(p).unwrap_or(f64::INFINITY);
    let w_margin = |p: &Point| obj.w().margin_unchecked(p);
    let lsc = |p: &Point| lsc_value(obj, p);
    let prob = ObstacleProblem {
        obstacle: &phi,
        boundary_value: &phi,
        outside_value: &phi,
        interface: (!obj.is_glued()).then_some(Interface {
            margin: &w_margin,
            value: &lsc,
        }),
    };
    relax(grid, &prob, cfg)
}

/// `min(phi1, phi2, phi)` at a point of `dW`, skipping pieces undefined there.
fn lsc_value(obj: &PiecewiseObjective, p: &Point) -> f64 {
    [obj.phi1().eval(p), obj.phi2().eval(p), obj.eval_phi_with_margin(p, 0.0)]
        .into_iter()
        .filter_map(|v| v.ok())
        .fold(f64::INFINITY, f64::min)
}

/// Which nodes carry the `-1` obstacle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleSet {
    /// Nodes in `U`.
    Open,
    /// Nodes within half a grid step of the closure of `U`; the interface
    /// stays at `dU`.
    Closure,
}

/// Relative extremal function `u_{U,X}`: relaxation of `-1` on `U`, `0` elsewhere,
/// with circle samples leaving `X` clamped to `0`.
pub fn relative_extremal(
    u: &Domain,
    x: &Domain,
    grid: &GridSpec,
    variant: ObstacleSet,
    cfg: &RelaxConfig,
) -> Result<EnvelopeGrid> {
    Ok(extremal_problem(u, x, grid, variant, cfg)?.solve(cfg))
}

fn extremal_problem(u: &Domain, x: &Domain, grid: &GridSpec, variant: ObstacleSet, cfg: &RelaxConfig) -> Result<Problem> {
    let n = x.dim()?;
    check_grid(n, grid)?;
    if u.dim()? != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: u.dim()?,
        });
    }
    if !same_domain(&grid.restriction, x) {
        return Err(Error::InvalidArgument("grid restriction must be X".into()));
    }
    let shift = closure_shift(grid, variant);
    let margin = |p: &Point| u.margin_unchecked(p);
    let obstacle = |p: &Point| if margin(p) + shift > 0.0 { -1.0 } else { 0.0 };
    let zero = |_: &Point| 0.0;
    let minus_one = |_: &Point| -1.0;
    let prob = ObstacleProblem {
        obstacle: &obstacle,
        boundary_value: &zero,
        outside_value: &zero,
        interface: Some(Interface {
            margin: &margin,
            value: &minus_one,
        }),
    };
    build_problem(grid, &prob, cfg)
}

fn closure_shift(grid: &GridSpec, variant: ObstacleSet) -> f64 {
    match variant {
        ObstacleSet::Open => 0.0,
        ObstacleSet::Closure => 0.5 * grid.max_step(),
    }
}

/// Sup-norm difference between the open and closure variants of `u_{U,X}`.
///
/// The variants share the relaxation operator and the closure obstacle lies
/// below the open one, so the closure variant is relaxed from the open
/// solution capped by its obstacle, which reaches the same fixed point as a
/// start from the obstacle.
pub fn closure_extremal_compare(u: &Domain, x: &Domain, grid: &GridSpec, cfg: &RelaxConfig) -> Result<f64> {
    let open = extremal_problem(u, x, grid, ObstacleSet::Open, cfg)?;
    let shift = closure_shift(grid, ObstacleSet::Closure);
    let closure_obstacle: Vec<f64> = open
        .nodes
        .iter()
        .map(|&i| if u.margin_unchecked(&grid.node_point(i)) + shift > 0.0 { -1.0 } else { 0.0 })
        .collect();
    let (open_values, ..) = open.run(open.obstacle.clone(), cfg);
    let start: Vec<f64> = open_values.iter().zip(&closure_obstacle).map(|(a, b)| a.min(*b)).collect();
    let closed = Problem {
        obstacle: closure_obstacle,
        ..open
    };
    let (closed_values, ..) = closed.run(start, cfg);
    Ok(open_values
        .iter()
        .zip(&closed_values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

fn check_grid(n: usize, grid: &GridSpec) -> Result<()> {
    grid.validate()?;
    if grid.bounds.len() != 2 * n {
        return Err(Error::DimensionMismatch {
            expected: 2 * n,
            found: grid.bounds.len() / 2,
        });
    }
    Ok(())
}

fn same_domain(a: &Domain, b: &Domain) -> bool {
    serde_json::to_string(a).ok() == serde_json::to_string(b).ok()
}

/// Grid over the radius for unitarily invariant scenarios in C^2: node `k`
/// stands for every point at distance `k h` from the center of `X`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialEnvelope {
    pub center: Point,
    pub step: f64,
    #[serde(with = "ext_vec")]
    pub values: Vec<f64>,
    pub sweeps: usize,
    pub residual: f64,
    pub converged: bool,
}

impl RadialEnvelope {
    pub fn radius(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    /// Interpolation linear in the log of the radius; `None` beyond the last node.
    pub fn value_at(&self, p: &Point) -> Option<f64> {
        radial_interp(&self.values, self.step, p.dist(&self.center))
    }

    pub fn summary(&self) -> RelaxSummary {
        RelaxSummary {
            sweeps: self.sweeps,
            residual: self.residual,
            converged: self.converged,
            interior_nodes: self.values.len(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("# schema=1\nindex,radius,value\n");
        for (k, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{k},{:?},{}", self.radius(k), crate::ext::format(*v));
        }
        out
    }
}

fn radial_interp(values: &[f64], h: f64, r: f64) -> Option<f64> {
    let t = r / h;
    let last = (values.len() - 1) as f64;
    if !(t <= last) {
        return None;
    }
    if values.len() == 1 {
        return Some(values[0]);
    }
    let i = (t.floor() as usize).min(values.len() - 2);
    let f = if i == 0 { t } else { (t / i as f64).ln() / ((i + 1) as f64 / i as f64).ln() };
    Some(match (f == 0.0, f == 1.0) {
        (true, _) => values[i],
        (_, true) => values[i + 1],
        _ => (1.0 - f) * values[i] + f * values[i + 1],
    })
}

/// Envelope of a unitarily invariant objective in C^2 on a radial grid of
/// `nodes` points across `[0, R)`, where `X` is the ball of radius `R`.
///
/// Each node `(r, 0)` is relaxed along the configured complex lines through
/// it; samples are mapped back to the grid by their distance to the center.
pub fn psh_envelope_radial(obj: &PiecewiseObjective, nodes: usize, cfg: &RelaxConfig) -> Result<RadialEnvelope> {
    cfg.validate()?;
    if obj.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: obj.dim(),
        });
    }
    let (center, radius) = match obj.x() {
        Domain::Ball { center, radius } => (*center, *radius),
        _ => return Err(Error::InvalidArgument("radial mode needs X to be a ball".into())),
    };
    if nodes < 8 {
        return Err(Error::InvalidArgument("radial grid needs at least 8 nodes".into()));
    }
    check_invariance(obj, &center, radius)?;
    let interface = match obj.w() {
        Domain::Ball { radius: rw, .. } if !obj.is_glued() => Some(*rw),
        _ => None,
    };
    let h = radius / nodes as f64;
    let dirs = cfg.line_directions(2);
    let angles: Vec<Complex64> = (0..cfg.angles)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / cfg.angles as f64))
        .collect();
    let at = |r: f64| center + Point::c2(Complex64::new(r, 0.0), Complex64::new(0.0, 0.0));
    let mut obstacle = Vec::with_capacity(nodes);
    for k in 0..nodes {
        obstacle.push(obj.eval_phi(&at(k as f64 * h))?);
    }
    let stencils: Vec<Vec<Average>> = (0..nodes)
        .map(|k| {
            let p = at(k as f64 * h);
            let margin = radius - k as f64 * h;
            let mut out = Vec::new();
            for &rs in &cfg.radii_steps {
                let r = (rs * h).min(margin);
                for a in &dirs {
                    let mut avg = Average::default();
                    let wa = 1.0 / angles.len() as f64;
                    for e in &angles {
                        let q = p + a.scale(*e * r);
                        let rho = q.dist(&center);
                        let dir = |target: f64| center + (q - center) * (target / rho.max(f64::MIN_POSITIVE));
                        let i = ((rho / h).floor() as usize).min(nodes - 1);
                        let mut lo = (i as f64 * h, Knot::Node(i));
                        let mut hi = if i + 1 < nodes {
                            ((i + 1) as f64 * h, Knot::Node(i + 1))
                        } else {
                            (radius, Knot::Value(obj.eval_phi_in_x(&dir(radius)).unwrap_or(f64::INFINITY)))
                        };
                        if let Some(rw) = interface.filter(|rw| lo.0 < *rw && *rw < hi.0) {
                            let knot = (rw, Knot::Value(lsc_value(obj, &dir(rw))));
                            if rho >= rw {
                                lo = knot;
                            } else {
                                hi = knot;
                            }
                        }
                        // Radial psh functions are convex in log r; maximal ones are linear in it.
                        let f = if lo.0 > 0.0 {
                            (rho / lo.0).ln() / (hi.0 / lo.0).ln()
                        } else {
                            rho / hi.0
                        }
                        .clamp(0.0, 1.0);
                        for (knot, w) in [(lo.1, 1.0 - f), (hi.1, f)] {
                            if w > 0.0 {
                                match knot {
                                    Knot::Node(k) => avg.terms.push((k as u32, wa * w)),
                                    Knot::Value(v) => avg.constant += wa * w * v,
                                }
                            }
                        }
                    }
                    merge_terms(&mut avg.terms);
                    out.push(avg);
                }
            }
            out
        })
        .collect();
    let problem = Problem {
        grid: GridSpec::new(vec![[0.0, radius]], vec![nodes], obj.x().clone()),
        nodes: (0..nodes).collect(),
        obstacle,
        stencils: stencils.into_iter().map(Stencil::Custom).collect(),
        standard: Vec::new(),
    };
    let solved = problem.solve(cfg);
    Ok(RadialEnvelope {
        center,
        step: h,
        values: solved.values,
        sweeps: solved.sweeps,
        residual: solved.residual,
        converged: solved.converged,
    })
}

#[derive(Clone, Copy)]
enum Knot {
    Node(usize),
    Value(f64),
}

/// Checks `phi(c + U(p - c)) = phi(p)` for sampled unitary `U` and points `p`.
fn check_invariance(obj: &PiecewiseObjective, c: &Point, radius: f64) -> Result<()> {
    if let Domain::Ball { center, .. } = obj.w() {
        if center != c {
            return Err(Error::InvalidArgument("radial mode needs W centered with X".into()));
        }
    } else {
        return Err(Error::InvalidArgument("radial mode needs W to be a ball".into()));
    }
    for j in 0..64 {
        let (u1, u2, u3) = r3(j);
        let (v1, v2, v3) = r3(j + 1000);
        let r = radius * 0.98 * u1;
        let p = *c + Point::c2(
            Complex64::from_polar(r * u2.sqrt(), 2.0 * PI * u3),
            Complex64::from_polar(r * (1.0 - u2).sqrt(), 2.0 * PI * v1),
        );
        // Unitary map: rotation in the (z1, z2) plane composed with phases.
        let (ct, st) = ((PI * v2).cos(), (PI * v2).sin());
        let ph = Complex64::from_polar(1.0, 2.0 * PI * v3);
        let d = p - *c;
        let q = *c + Point::c2(
            (d.coord(0) * ct - d.coord(1) * st) * ph,
            (d.coord(0) * st + d.coord(1) * ct) * ph.conj(),
        );
        let (a, b) = (obj.eval_phi(&p)?, obj.eval_phi(&q)?);
        if !(a == b || (a - b).abs() <= 1e-12 * (1.0 + a.abs())) {
            return Err(Error::InvalidArgument(
                "radial mode needs a unitarily invariant objective".into(),
            ));
        }
    }
    Ok(())
}
