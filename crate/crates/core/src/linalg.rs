//! Dense complex-Hermitian linear algebra used by the Fock-space layer.
//!
//! Everything here is deterministic pure Rust; no BLAS/LAPACK backend is
//! linked. Matrix sizes in this crate stay below ~1000, for which cyclic
//! Jacobi is fast enough and has excellent accuracy on Hermitian input.

use ndarray::Array2;
use num_complex::Complex64 as C64;

/// Conjugate transpose.
pub fn dagger(m: &Array2<C64>) -> Array2<C64> {
    let mut out = m.t().to_owned();
    out.mapv_inplace(|z| z.conj());
    out
}

pub fn frobenius_norm(m: &Array2<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &Array2<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Deviation from Hermiticity, max |A - A†| entrywise.
pub fn hermiticity_defect(m: &Array2<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (m[[i, j]] - m[[j, i]].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching unitary whose
/// columns are eigenvectors: `a ≈ V diag(w) V†`. Only the Hermitian part of
/// the input is seen; the anti-Hermitian defect is the caller's concern.
pub fn eigh(a: &Array2<C64>) -> (Vec<f64>, Array2<C64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigh requires a square matrix");
    let mut m = a.clone();
    // Work on the Hermitian average so rounding in the input cannot stall convergence.
    for i in 0..n {
        for j in 0..n {
            let h = 0.5 * (m[[i, j]] + m[[j, i]].conj());
            m[[i, j]] = h;
        }
    }
    let mut v = Array2::<C64>::eye(n);
    if n > 1 {
        let scale = frobenius_norm(&m).max(f64::MIN_POSITIVE);
        let tol = 1e-15 * scale;
        for _sweep in 0..60 {
            let mut off = 0.0f64;
            for p in 0..n - 1 {
                for q in p + 1..n {
                    off += m[[p, q]].norm_sqr();
                }
            }
            if (2.0 * off).sqrt() <= tol {
                break;
            }
            for p in 0..n - 1 {
                for q in p + 1..n {
                    let apq = m[[p, q]];
                    let abs_apq = apq.norm();
                    if abs_apq <= 1e-300 {
                        continue;
                    }
                    let app = m[[p, p]].re;
                    let aqq = m[[q, q]].re;
                    // Small-angle root of t^2 + 2 tau t - 1 = 0 with
                    // tau = cot(2 theta); keeps |tan theta| <= 1.
                    let tau = (aqq - app) / (2.0 * abs_apq);
                    let t = if tau >= 0.0 {
                        1.0 / (tau + (1.0 + tau * tau).sqrt())
                    } else {
                        1.0 / (tau - (1.0 + tau * tau).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    let phase = apq / abs_apq;
                    let sigma = phase * s;
                    // A <- G† A G with G embedding [[c, sigma], [-conj(sigma), c]]
                    // on the (p, q) plane.
                    for r in 0..n {
                        let mrp = m[[r, p]];
                        let mrq = m[[r, q]];
                        m[[r, p]] = mrp * c - mrq * sigma.conj();
                        m[[r, q]] = mrp * sigma + mrq * c;
                    }
                    for r in 0..n {
                        let mpr = m[[p, r]];
                        let mqr = m[[q, r]];
                        m[[p, r]] = mpr * c - mqr * sigma;
                        m[[q, r]] = mpr * sigma.conj() + mqr * c;
                    }
                    m[[p, q]] = C64::new(0.0, 0.0);
                    m[[q, p]] = C64::new(0.0, 0.0);
                    m[[p, p]] = C64::new(m[[p, p]].re, 0.0);
                    m[[q, q]] = C64::new(m[[q, q]].re, 0.0);
                    for r in 0..n {
                        let vrp = v[[r, p]];
                        let vrq = v[[r, q]];
                        v[[r, p]] = vrp * c - vrq * sigma.conj();
                        v[[r, q]] = vrp * sigma + vrq * c;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[[i, i]].re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());
    let w: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vs = Array2::<C64>::zeros((n, n));
    for (newcol, &oldcol) in order.iter().enumerate() {
        for r in 0..n {
            vs[[r, newcol]] = v[[r, oldcol]];
        }
    }
    (w, vs)
}

/// Principal square root of a positive-semidefinite Hermitian matrix.
/// Negative eigenvalues from rounding are clipped to zero.
pub fn sqrt_psd(a: &Array2<C64>) -> Array2<C64> {
    let (w, v) = eigh(a);
    let n = a.nrows();
    let mut out = Array2::<C64>::zeros((n, n));
    for (idx, &wi) in w.iter().enumerate() {
        let s = wi.max(0.0).sqrt();
        if s == 0.0 {
            continue;
        }
        for r in 0..n {
            for c in 0..n {
                out[[r, c]] += v[[r, idx]] * v[[c, idx]].conj() * s;
            }
        }
    }
    out
}

/// Uhlmann fidelity tr sqrt(sqrt(a) b sqrt(a)) of two density matrices.
pub fn fidelity(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    let ra = sqrt_psd(a);
    let inner = ra.dot(b).dot(&ra);
    let (w, _) = eigh(&inner);
    w.iter().map(|&x| x.max(0.0).sqrt()).sum()
}
