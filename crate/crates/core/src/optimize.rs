//! Scalar maximization: coarse grid seeding followed by golden-section
//! refinement on the bracketing interval.

/// Outcome of a scalar maximization.
#[derive(Debug, Clone, Copy)]
pub struct ScalarMax {
    pub x: f64,
    pub fx: f64,
    pub evals: usize,
    /// Argmax landed within `boundary_tol` of an endpoint of the original
    /// interval.
    pub on_boundary: bool,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
pub fn golden_section_max<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    xtol: f64,
    max_iter: usize,
) -> ScalarMax {
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut evals = 0usize;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    evals += 2;
    for _ in 0..max_iter {
        if (hi - lo).abs() <= xtol {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        evals += 1;
    }
    let (x, fx) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    ScalarMax {
        x,
        fx,
        evals,
        on_boundary: false,
    }
}

/// Seed with an `n_grid`-point scan, then refine by golden section inside the
/// bracketing cell pair around the best grid point.
pub fn grid_then_golden_max<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    n_grid: usize,
    xtol: f64,
    boundary_tol: f64,
) -> ScalarMax {
    assert!(n_grid >= 3 && b > a);
    let step = (b - a) / (n_grid - 1) as f64;
    let mut best_i = 0usize;
    let mut best_f = f64::NEG_INFINITY;
    let mut evals = 0usize;
    for i in 0..n_grid {
        let x = a + step * i as f64;
        let fx = f(x);
        evals += 1;
        if fx > best_f {
            best_f = fx;
            best_i = i;
        }
    }
    let lo = if best_i == 0 { a } else { a + step * (best_i - 1) as f64 };
    let hi = if best_i + 1 == n_grid {
        b
    } else {
        a + step * (best_i + 1) as f64
    };
    let mut refined = golden_section_max(&mut f, lo, hi, xtol, 200);
    refined.evals += evals;
    refined.on_boundary = refined.x - a < boundary_tol || b - refined.x < boundary_tol;
    refined
}
