//! Independent oracles for the integration suites. Nothing here reuses the
//! closed-form contraction sums or the heterodyne closed-form estimator that
//! the tests check.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use qloss_core::linalg;

/// Matrix exponential of the truncated two-mode squeezing generator
/// `r (aI aR - aI† aR†)` on one conserved-difference block, via the
/// Hermitian eigendecomposition of `i G`. The generator couples only
/// neighbouring rungs, so each block is tridiagonal.
pub fn tms_expm_block(r: f64, internal_max: usize, d: i64) -> Array2<C64> {
    let n = internal_max + 1 - d.unsigned_abs() as usize;
    let mut g = Array2::<C64>::zeros((n, n));
    for j in 0..n {
        let k = j + d.max(0) as usize;
        let m = j + (-d).max(0) as usize;
        if j > 0 {
            g[[j - 1, j]] = C64::new(r * ((k * m) as f64).sqrt(), 0.0);
        }
        if j + 1 < n {
            g[[j + 1, j]] = C64::new(-r * (((k + 1) * (m + 1)) as f64).sqrt(), 0.0);
        }
    }
    let h = g.mapv(|z| z * C64::new(0.0, 1.0));
    let (w, v) = linalg::eigh(&h);
    let mut out = Array2::<C64>::zeros((n, n));
    for idx in 0..n {
        let ph = C64::from_polar(1.0, -w[idx]);
        for rr in 0..n {
            for cc in 0..n {
                out[[rr, cc]] += v[[rr, idx]] * v[[cc, idx]].conj() * ph;
            }
        }
    }
    out
}

/// Nelder-Mead maximization in two dimensions.
pub fn nelder_mead_max<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    start: (f64, f64),
    scale: (f64, f64),
    iters: usize,
) -> (f64, f64, f64) {
    let mut simplex = [
        (start.0, start.1),
        (start.0 + scale.0, start.1),
        (start.0, start.1 + scale.1),
    ];
    let mut values = [0.0f64; 3];
    for i in 0..3 {
        values[i] = f(simplex[i].0, simplex[i].1);
    }
    for _ in 0..iters {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
        let (best, mid, worst) = (order[0], order[1], order[2]);
        let centroid = (
            0.5 * (simplex[best].0 + simplex[mid].0),
            0.5 * (simplex[best].1 + simplex[mid].1),
        );
        let refl = (
            centroid.0 + (centroid.0 - simplex[worst].0),
            centroid.1 + (centroid.1 - simplex[worst].1),
        );
        let f_refl = f(refl.0, refl.1);
        if f_refl > values[best] {
            let exp = (
                centroid.0 + 2.0 * (centroid.0 - simplex[worst].0),
                centroid.1 + 2.0 * (centroid.1 - simplex[worst].1),
            );
            let f_exp = f(exp.0, exp.1);
            if f_exp > f_refl {
                simplex[worst] = exp;
                values[worst] = f_exp;
            } else {
                simplex[worst] = refl;
                values[worst] = f_refl;
            }
        } else if f_refl > values[mid] {
            simplex[worst] = refl;
            values[worst] = f_refl;
        } else {
            let contr = (
                centroid.0 + 0.5 * (simplex[worst].0 - centroid.0),
                centroid.1 + 0.5 * (simplex[worst].1 - centroid.1),
            );
            let f_contr = f(contr.0, contr.1);
            if f_contr > values[worst] {
                simplex[worst] = contr;
                values[worst] = f_contr;
            } else {
                for i in 0..3 {
                    if i != best {
                        simplex[i] = (
                            0.5 * (simplex[i].0 + simplex[best].0),
                            0.5 * (simplex[i].1 + simplex[best].1),
                        );
                        values[i] = f(simplex[i].0, simplex[i].1);
                    }
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..3 {
        if values[i] > values[best] {
            best = i;
        }
    }
    (simplex[best].0, simplex[best].1, values[best])
}

/// Numeric joint maximization of the heterodyne log likelihood over
/// `(theta, gamma)`: Nelder-Mead start, then damped Newton on the analytic
/// gradient with a finite-difference Hessian.
pub fn heterodyne_mle_numeric(samples: &[(f64, f64)], n_s: f64) -> (f64, f64) {
    let sum_a: f64 = samples.iter().map(|s| s.0).sum();
    let sum_b: f64 = samples.iter().map(|s| s.1).sum();
    let count = samples.len() as f64;
    let neg_sq = |theta: f64, gamma: f64| -> f64 {
        if theta < 0.0 {
            return f64::NEG_INFINITY;
        }
        let u = (theta * n_s).sqrt();
        let (c, s) = (gamma.cos(), gamma.sin());
        -samples
            .iter()
            .map(|&(a, b)| (a - u * c) * (a - u * c) + (b - u * s) * (b - u * s))
            .sum::<f64>()
    };
    let (mut theta, mut gamma, _) = nelder_mead_max(neg_sq, (0.5, 0.0), (0.2, 0.5), 300);
    // Newton refinement on the gradient of the exponent in (u, gamma).
    let grad = |theta: f64, gamma: f64| -> (f64, f64) {
        let u = (theta * n_s).sqrt();
        let (c, s) = (gamma.cos(), gamma.sin());
        let du = -2.0 * (c * sum_a + s * sum_b - u * count);
        let dg = 2.0 * u * (s * sum_a - c * sum_b);
        // d theta = d u * du/dtheta
        (du * n_s / (2.0 * u), dg)
    };
    for _ in 0..60 {
        let (g0, g1) = grad(theta, gamma);
        let h = 1e-7;
        let (ga0, ga1) = grad(theta + h, gamma);
        let (gb0, gb1) = grad(theta, gamma + h);
        let h00 = (ga0 - g0) / h;
        let h01 = (gb0 - g0) / h;
        let h10 = (ga1 - g1) / h;
        let h11 = (gb1 - g1) / h;
        let det = h00 * h11 - h01 * h10;
        if det.abs() < 1e-300 {
            break;
        }
        let step_t = (g0 * h11 - g1 * h01) / det;
        let step_g = (h00 * g1 - h10 * g0) / det;
        theta -= step_t;
        gamma -= step_g;
        if step_t.abs() < 1e-14 && step_g.abs() < 1e-14 {
            break;
        }
    }
    (theta, gamma)
}
