//! Box-constrained Nelder–Mead simplex search. Trial points are projected
//! onto the box, so every evaluated point is feasible.

/// Stopping rules and simplex geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values is below `f_tol_abs + f_tol_rel·|f_best|`.
    pub f_tol_abs: f64,
    pub f_tol_rel: f64,
    /// ...and every vertex lies within `x_tol` of the best one (max norm).
    pub x_tol: f64,
    /// Initial edge length as a fraction of each box width.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 400,
            f_tol_abs: 1e-12,
            f_tol_rel: 1e-6,
            x_tol: 1e-3,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, h);
    }
}

/// Non-finite objective values are treated as +∞.
fn eval(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], count: &mut usize) -> f64 {
    *count += 1;
    let v = f(x);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimizes `f` over the box `[lo, hi]` starting from `x0`.
pub fn minimize(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &NelderMeadOptions,
) -> Minimum {
    let n = x0.len();
    assert!(n > 0 && lo.len() == n && hi.len() == n, "dimension mismatch");
    let mut evals = 0usize;

    let mut start = x0.to_vec();
    project(&mut start, lo, hi);
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.clone());
    for i in 0..n {
        let mut v = start.clone();
        let step = opts.initial_step * (hi[i] - lo[i]);
        // Step inward when the start sits at the upper face.
        v[i] = if v[i] + step <= hi[i] { v[i] + step } else { v[i] - step };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(&mut f, x, &mut evals)).collect();

    let mut converged = false;
    let mut order: Vec<usize> = (0..=n).collect();
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];

    while evals < opts.max_evals {
        // Stable sort keeps the ordering reproducible among equal values.
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (best, worst, second) = (order[0], order[n], order[n - 1]);

        let spread = values[worst] - values[best];
        let f_ok = spread.is_finite() && spread <= opts.f_tol_abs + opts.f_tol_rel * values[best].abs();
        let x_ok = simplex
            .iter()
            .all(|v| v.iter().zip(&simplex[best]).all(|(a, b)| (a - b).abs() <= opts.x_tol));
        if f_ok && x_ok {
            converged = true;
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&simplex[i]) {
                *c += v / n as f64;
            }
        }

        let along = |t: &mut [f64], coef: f64, w: &[f64], c: &[f64]| {
            for ((ti, &wi), &ci) in t.iter_mut().zip(w).zip(c) {
                *ti = ci + coef * (ci - wi);
            }
            project(t, lo, hi);
        };

        along(&mut trial, 1.0, &simplex[worst], &centroid);
        let f_r = eval(&mut f, &trial, &mut evals);

        if f_r < values[best] {
            along(&mut trial2, 2.0, &simplex[worst], &centroid);
            let f_e = eval(&mut f, &trial2, &mut evals);
            if f_e < f_r {
                simplex[worst].copy_from_slice(&trial2);
                values[worst] = f_e;
            } else {
                simplex[worst].copy_from_slice(&trial);
                values[worst] = f_r;
            }
            continue;
        }
        if f_r < values[second] {
            simplex[worst].copy_from_slice(&trial);
            values[worst] = f_r;
            continue;
        }

        // Outside contraction if the reflection beat the worst vertex,
        // inside contraction otherwise.
        let coef = if f_r < values[worst] { 0.5 } else { -0.5 };
        along(&mut trial2, coef, &simplex[worst], &centroid);
        let f_c = eval(&mut f, &trial2, &mut evals);
        if f_c < values[worst].min(f_r) {
            simplex[worst].copy_from_slice(&trial2);
            values[worst] = f_c;
            continue;
        }

        let anchor = simplex[best].clone();
        for &i in &order[1..] {
            for (v, a) in simplex[i].iter_mut().zip(&anchor) {
                *v = a + 0.5 * (*v - a);
            }
            values[i] = eval(&mut f, &simplex[i], &mut evals);
        }
    }

    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        f: values[best],
        evaluations: evals,
        converged,
    }
}
