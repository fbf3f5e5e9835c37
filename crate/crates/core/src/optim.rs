//! Nelder–Mead simplex minimization with dimension-adaptive coefficients.

/// Stopping rules for [`nelder_mead`].
#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values and the simplex diameter both fall below this.
    pub tolerance: f64,
    /// Stop after this many evaluations without improving the best value by more than `tolerance`.
    pub stall_evals: usize,
}

#[derive(Clone, Debug)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Minimizes `f` from `x0` with initial simplex edge `step`.
///
/// Uses the adaptive coefficients of Gao and Han (reflection 1, expansion
/// 1 + 2/n, contraction 3/4 - 1/(2n), shrink 1 - 1/n). Non-finite values
/// other than `-inf` are treated as `+inf`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: f64,
    opts: SimplexOptions,
) -> SimplexResult {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let f0 = eval(x0, &mut evals);
    if n == 0 || f0 == f64::NEG_INFINITY {
        return SimplexResult {
            x: x0.to_vec(),
            value: f0,
            evals,
        };
    }
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let mut best = f64::INFINITY;
    let mut last_improvement = 0usize;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let lo = simplex[0].1;
        if lo < best - opts.tolerance {
            last_improvement = evals;
        }
        best = best.min(lo);
        if lo == f64::NEG_INFINITY || evals >= opts.max_evals || evals - last_improvement >= opts.stall_evals {
            break;
        }
        let hi = simplex[n].1;
        let spread = if hi.is_finite() { hi - lo } else { f64::INFINITY };
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= opts.tolerance && diameter <= opts.tolerance {
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / nf;
            }
        }
        let point = |t: f64, out: &mut Vec<f64>, worst: &[f64]| {
            for ((o, c), w) in out.iter_mut().zip(&centroid).zip(worst) {
                *o = c + t * (c - w);
            }
        };

        let worst = simplex[n].0.clone();
        point(alpha, &mut trial, &worst);
        let fr = eval(&trial, &mut evals);
        if fr < simplex[0].1 {
            let reflected = trial.clone();
            point(beta, &mut trial, &worst);
            let fe = eval(&trial, &mut evals);
            simplex[n] = if fe < fr { (trial.clone(), fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (trial.clone(), fr);
            continue;
        }
        let outside = fr < simplex[n].1;
        point(if outside { gamma } else { -gamma }, &mut trial, &worst);
        let fc = eval(&trial, &mut evals);
        if (outside && fc <= fr) || (!outside && fc < simplex[n].1) {
            simplex[n] = (trial.clone(), fc);
            continue;
        }
        let x_lo = simplex[0].0.clone();
        for (x, v) in simplex.iter_mut().skip(1) {
            for (xi, li) in x.iter_mut().zip(&x_lo) {
                *xi = li + delta * (*xi - li);
            }
            *v = eval(x, &mut evals);
        }
    }
    let (x, value) = simplex.swap_remove(0);
    SimplexResult { x, value, evals }
}
