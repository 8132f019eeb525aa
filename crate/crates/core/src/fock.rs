//! Truncated two-mode Fock-space numerics.
//!
//! Basis kets are written `|k, m>` with `k` the returned-probe (R) photon
//! number and `m` the idler (I) photon number; the flat index is row-major,
//! `k * (per_mode_max + 1) + m`. The two-mode squeezer is generated by
//! `r (a_I a_R - a_I† a_R†)`, which makes the squeezed-vacuum amplitude
//! `<0,0|S(r)|0,0> = 1/cosh r` real and positive, and the phase shifter acts
//! on mode R as `U(phi)|k,m> = exp(-i phi k)|k,m>`.
//!
//! Every operator in the sensing pipeline commutes with the photon-number
//! difference `n_R - n_I`, so matrices are block diagonal over
//! `d = k - m`. [`BlockDiagOp`] stores that representation; it is what the
//! Monte Carlo hot paths use, while [`TwoModeOperator`] is the general dense
//! form.

use std::sync::OnceLock;

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{QlossError, Result};
use crate::linalg;

/// Natural log of n! for n = 0..LN_FACT_LEN, built by accumulation so no
/// intermediate factorial overflows.
const LN_FACT_LEN: usize = 8192;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = vec![0.0f64; LN_FACT_LEN];
        for n in 1..LN_FACT_LEN {
            t[n] = t[n - 1] + (n as f64).ln();
        }
        t
    })
}

#[inline]
pub(crate) fn ln_fact(n: usize) -> f64 {
    ln_fact_table()[n]
}

/// Per-mode photon-number cutoff together with the certified tail tolerance.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FockCutoff {
    pub per_mode_max: usize,
    pub tail_tol: f64,
}

impl FockCutoff {
    pub fn new(per_mode_max: usize, tail_tol: f64) -> Result<Self> {
        if per_mode_max < 1 {
            return Err(QlossError::InvalidConfig(
                "per_mode_max must be at least 1".into(),
            ));
        }
        if !(tail_tol > 0.0 && tail_tol < 1.0) {
            return Err(QlossError::InvalidConfig(
                "tail_tol must lie in (0, 1)".into(),
            ));
        }
        Ok(Self {
            per_mode_max,
            tail_tol,
        })
    }

    /// Side length of one mode's truncated ladder.
    #[inline]
    pub fn modes(&self) -> usize {
        self.per_mode_max + 1
    }

    /// Dimension of the two-mode space, `(per_mode_max + 1)^2`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.modes() * self.modes()
    }

    #[inline]
    pub fn flat(&self, k: usize, m: usize) -> usize {
        debug_assert!(k <= self.per_mode_max && m <= self.per_mode_max);
        k * self.modes() + m
    }

    #[inline]
    pub fn unflat(&self, idx: usize) -> (usize, usize) {
        (idx / self.modes(), idx % self.modes())
    }
}

/// Squeeze magnitude with its cached hyperbolic pair.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SqueezeParams {
    pub r: f64,
    pub tau: f64,
    pub nu_c: f64,
}

impl SqueezeParams {
    pub fn new(r: f64) -> Result<Self> {
        if !r.is_finite() {
            return Err(QlossError::InvalidConfig(
                "squeeze parameter must be finite".into(),
            ));
        }
        let tau = r.tanh();
        let nu_c = r.cosh();
        debug_assert!(tau.abs() < 1.0 && nu_c >= 1.0);
        debug_assert!((nu_c * nu_c - (nu_c * tau) * (nu_c * tau) - 1.0).abs() < 1e-12);
        Ok(Self { r, tau, nu_c })
    }
}

/// Dense complex operator on the truncated two-mode space.
#[derive(Debug, Clone)]
pub struct TwoModeOperator {
    pub entries: Array2<C64>,
    pub cutoff: FockCutoff,
    /// Set by constructors that guarantee Hermiticity (within 1e-12).
    pub hermitian: bool,
}

impl TwoModeOperator {
    pub fn from_entries(entries: Array2<C64>, cutoff: FockCutoff) -> Result<Self> {
        if entries.nrows() != cutoff.dim() || entries.ncols() != cutoff.dim() {
            return Err(QlossError::DimensionMismatch(format!(
                "operator is {}x{}, cutoff dimension is {}",
                entries.nrows(),
                entries.ncols(),
                cutoff.dim()
            )));
        }
        let hermitian = linalg::hermiticity_defect(&entries) < 1e-12;
        Ok(Self {
            entries,
            cutoff,
            hermitian,
        })
    }

    pub fn identity(cutoff: FockCutoff) -> Self {
        Self {
            entries: Array2::eye(cutoff.dim()),
            cutoff,
            hermitian: true,
        }
    }

    pub fn zeros(cutoff: FockCutoff) -> Self {
        Self {
            entries: Array2::zeros((cutoff.dim(), cutoff.dim())),
            cutoff,
            hermitian: true,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.cutoff.dim()
    }

    pub fn get(&self, k_row: usize, m_row: usize, k_col: usize, m_col: usize) -> C64 {
        self.entries[[self.cutoff.flat(k_row, m_row), self.cutoff.flat(k_col, m_col)]]
    }

    pub fn dagger(&self) -> Self {
        Self {
            entries: linalg::dagger(&self.entries),
            cutoff: self.cutoff,
            hermitian: self.hermitian,
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cutoff.per_mode_max != other.cutoff.per_mode_max {
            return Err(QlossError::DimensionMismatch(
                "operator cutoffs differ".into(),
            ));
        }
        Ok(Self {
            entries: self.entries.dot(&other.entries),
            cutoff: self.cutoff,
            hermitian: false,
        })
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.entries[[i, i]]).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.entries)
    }
}

/// `A rho A†` with matching cutoffs. Hermiticity of `rho` is preserved; the
/// trace is preserved (up to truncation) when `A` is unitary.
pub fn apply_sandwich(a: &TwoModeOperator, rho: &TwoModeOperator) -> Result<TwoModeOperator> {
    if a.cutoff.per_mode_max != rho.cutoff.per_mode_max {
        return Err(QlossError::DimensionMismatch(
            "sandwich operands have different cutoffs".into(),
        ));
    }
    let prod = a.entries.dot(&rho.entries).dot(&linalg::dagger(&a.entries));
    Ok(TwoModeOperator {
        entries: prod,
        cutoff: rho.cutoff,
        hermitian: rho.hermitian,
    })
}

/// Which of the two modes an operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Returned probe, first ket label `k`.
    Returned,
    /// Retained idler, second ket label `m`.
    Idler,
}

/// Annihilation and creation operators `(a, a†)` on the requested mode,
/// tensored with the identity on the other mode.
pub fn ladder_ops(cutoff: FockCutoff, mode: Mode) -> (TwoModeOperator, TwoModeOperator) {
    let dim = cutoff.dim();
    let max = cutoff.per_mode_max;
    let mut lower = Array2::<C64>::zeros((dim, dim));
    let mut raise = Array2::<C64>::zeros((dim, dim));
    for k in 0..=max {
        for m in 0..=max {
            let col = cutoff.flat(k, m);
            let n = match mode {
                Mode::Returned => k,
                Mode::Idler => m,
            };
            if n > 0 {
                let row = match mode {
                    Mode::Returned => cutoff.flat(k - 1, m),
                    Mode::Idler => cutoff.flat(k, m - 1),
                };
                lower[[row, col]] = C64::new((n as f64).sqrt(), 0.0);
            }
            if n < max {
                let row = match mode {
                    Mode::Returned => cutoff.flat(k + 1, m),
                    Mode::Idler => cutoff.flat(k, m + 1),
                };
                raise[[row, col]] = C64::new((n as f64 + 1.0).sqrt(), 0.0);
            }
        }
    }
    (
        TwoModeOperator {
            entries: lower,
            cutoff,
            hermitian: false,
        },
        TwoModeOperator {
            entries: raise,
            cutoff,
            hermitian: false,
        },
    )
}

/// Phase shifter on the returned mode: diagonal with entries
/// `exp(-i phi k)` for basis ket `|k, m>`.
pub fn phase_shift_diag(phi: f64, cutoff: FockCutoff) -> TwoModeOperator {
    let dim = cutoff.dim();
    let mut entries = Array2::<C64>::zeros((dim, dim));
    for idx in 0..dim {
        let (k, _) = cutoff.unflat(idx);
        entries[[idx, idx]] = C64::from_polar(1.0, -phi * k as f64);
    }
    TwoModeOperator {
        entries,
        cutoff,
        hermitian: phi == 0.0,
    }
}

/// Single matrix element `<k_out, m_out | S(r) | k_in, m_in>` of the
/// two-mode squeezer, evaluated as the finite contraction sum over `i1`
/// (the infinite ladder sum collapses once both photon numbers are fixed).
/// Log-factorial accumulation keeps every factor in range.
pub fn tms_element(
    k_out: usize,
    m_out: usize,
    k_in: usize,
    m_in: usize,
    tau: f64,
    nu_c: f64,
) -> f64 {
    // S conserves the photon-number difference between the two modes.
    if k_out + m_in != m_out + k_in {
        return 0.0;
    }
    let d = k_out as i64 - k_in as i64;
    let i1_lo = (-d).max(0) as usize;
    let i1_hi = k_in.min(m_in);
    if i1_lo > i1_hi {
        return 0.0;
    }
    let ln_tau = if tau == 0.0 { 0.0 } else { tau.abs().ln() };
    let ln_nu = nu_c.ln();
    let pref =
        0.5 * (ln_fact(k_in) + ln_fact(m_in) + ln_fact(k_out) + ln_fact(m_out));
    let mut acc = 0.0f64;
    for i1 in i1_lo..=i1_hi {
        let a1 = (i1 as i64 + d) as usize;
        let tau_pow = a1 + i1;
        if tau == 0.0 {
            if tau_pow > 0 {
                continue;
            }
        }
        let ln_mag = (tau_pow as f64) * ln_tau
            - ((k_in + m_in + 1 - 2 * i1) as f64) * ln_nu
            + pref
            - ln_fact(a1)
            - ln_fact(i1)
            - ln_fact(k_in - i1)
            - ln_fact(m_in - i1);
        let mut sign = if a1 % 2 == 1 { -1.0 } else { 1.0 };
        if tau < 0.0 && tau_pow % 2 == 1 {
            sign = -sign;
        }
        acc += sign * ln_mag.exp();
    }
    acc
}

/// Two-mode squeezer matrix over the truncated basis.
///
/// Columns `|k, m>` with `k, m <= per_mode_max / 2` carry the cutoff
/// certificate: the function fails with a cutoff error if any of them loses
/// more squared norm than `tail_tol` to truncation.
pub fn tms_matrix_elements(
    params: SqueezeParams,
    cutoff: FockCutoff,
) -> Result<TwoModeOperator> {
    let blocks = tms_blocks(params, cutoff.per_mode_max);
    let deficit = blocks.certified_column_deficit(cutoff.per_mode_max / 2);
    if deficit > cutoff.tail_tol {
        return Err(QlossError::CutoffTooSmall {
            context: "two-mode squeezer column norm",
            deficit,
            tail_tol: cutoff.tail_tol,
        });
    }
    Ok(blocks.to_dense(cutoff))
}

/// Block-diagonal operator over the conserved photon-number difference
/// `d = k - m`. Block `d` (stored at index `d + per_mode_max`) has dimension
/// `per_mode_max + 1 - |d|` and is indexed by the ladder coordinate
/// `j = min(k, m)`, i.e. `(k, m) = (j + max(d, 0), j + max(-d, 0))`.
#[derive(Debug, Clone)]
pub struct BlockDiagOp {
    pub per_mode_max: usize,
    pub blocks: Vec<Array2<C64>>,
}

impl BlockDiagOp {
    pub fn zeros(per_mode_max: usize) -> Self {
        let blocks = (-(per_mode_max as i64)..=per_mode_max as i64)
            .map(|d| {
                let n = per_mode_max + 1 - d.unsigned_abs() as usize;
                Array2::zeros((n, n))
            })
            .collect();
        Self {
            per_mode_max,
            blocks,
        }
    }

    pub fn identity(per_mode_max: usize) -> Self {
        let mut out = Self::zeros(per_mode_max);
        for b in &mut out.blocks {
            let n = b.nrows();
            *b = Array2::eye(n);
        }
        out
    }

    #[inline]
    pub fn block_index(&self, d: i64) -> usize {
        (d + self.per_mode_max as i64) as usize
    }

    /// (k, m) of ladder coordinate `j` inside block `d`.
    #[inline]
    pub fn km(&self, d: i64, j: usize) -> (usize, usize) {
        (
            j + d.max(0) as usize,
            j + (-d).max(0) as usize,
        )
    }

    pub fn diffs(&self) -> impl Iterator<Item = i64> {
        -(self.per_mode_max as i64)..=self.per_mode_max as i64
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.per_mode_max, other.per_mode_max);
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.dot(b))
            .collect();
        Self {
            per_mode_max: self.per_mode_max,
            blocks,
        }
    }

    pub fn dagger(&self) -> Self {
        Self {
            per_mode_max: self.per_mode_max,
            blocks: self.blocks.iter().map(linalg::dagger).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        self.blocks
            .iter()
            .map(|b| (0..b.nrows()).map(|i| b[[i, i]]).sum::<C64>())
            .sum()
    }

    pub fn scale(&mut self, c: C64) {
        for b in &mut self.blocks {
            b.mapv_inplace(|z| z * c);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            *a += b;
        }
    }

    /// self - other, scaled: (self - other) * c
    pub fn sub_scaled(&self, other: &Self, c: f64) -> Self {
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a - b).mapv(|z| z * c))
            .collect();
        Self {
            per_mode_max: self.per_mode_max,
            blocks,
        }
    }

    pub fn to_dense(&self, cutoff: FockCutoff) -> TwoModeOperator {
        assert_eq!(cutoff.per_mode_max, self.per_mode_max);
        let dim = cutoff.dim();
        let mut entries = Array2::<C64>::zeros((dim, dim));
        for d in self.diffs() {
            let b = &self.blocks[self.block_index(d)];
            for jr in 0..b.nrows() {
                let (kr, mr) = self.km(d, jr);
                for jc in 0..b.ncols() {
                    let (kc, mc) = self.km(d, jc);
                    entries[[cutoff.flat(kr, mr), cutoff.flat(kc, mc)]] = b[[jr, jc]];
                }
            }
        }
        let hermitian = self
            .blocks
            .iter()
            .all(|b| linalg::hermiticity_defect(b) < 1e-12);
        TwoModeOperator {
            entries,
            cutoff,
            hermitian,
        }
    }

    /// Extract the block representation of a dense operator, failing if any
    /// entry outside the conserved-difference blocks exceeds `tol`.
    pub fn from_dense(op: &TwoModeOperator, tol: f64) -> Result<Self> {
        let max = op.cutoff.per_mode_max;
        let mut out = Self::zeros(max);
        let mut leak = 0.0f64;
        for kr in 0..=max {
            for mr in 0..=max {
                let row = op.cutoff.flat(kr, mr);
                let dr = kr as i64 - mr as i64;
                for kc in 0..=max {
                    for mc in 0..=max {
                        let col = op.cutoff.flat(kc, mc);
                        let dc = kc as i64 - mc as i64;
                        let z = op.entries[[row, col]];
                        if dr == dc {
                            let bi = out.block_index(dr);
                            let jr = kr.min(mr);
                            let jc = kc.min(mc);
                            out.blocks[bi][[jr, jc]] = z;
                        } else {
                            leak = leak.max(z.norm());
                        }
                    }
                }
            }
        }
        if leak > tol {
            return Err(QlossError::DimensionMismatch(format!(
                "operator is not block diagonal over k - m (off-block magnitude {leak:.3e})"
            )));
        }
        Ok(out)
    }

    /// Largest per-column squared-norm deficit of columns `|k, m>` with
    /// `k + m <= inner`, treating the blocks as a would-be isometry. This is
    /// the cutoff certificate for unitary block operators.
    pub fn certified_column_deficit(&self, inner: usize) -> f64 {
        let mut worst = 0.0f64;
        for d in self.diffs() {
            let b = &self.blocks[self.block_index(d)];
            for jc in 0..b.ncols() {
                let (k, m) = self.km(d, jc);
                if k + m > inner {
                    continue;
                }
                let norm2: f64 = (0..b.nrows()).map(|jr| b[[jr, jc]].norm_sqr()).sum();
                worst = worst.max((1.0 - norm2).abs());
            }
        }
        worst
    }

    /// Left-multiply by the returned-mode phase shifter: `self <-
    /// U(phi) self`, scaling row `(k, m)` by `exp(-i phi k)`. Equivalent to
    /// `phase_blocks(phi, max).matmul(self)` without the matrix product.
    pub fn scale_rows_phase(&mut self, phi: f64) {
        if phi == 0.0 {
            return;
        }
        for d in -(self.per_mode_max as i64)..=self.per_mode_max as i64 {
            let bi = self.block_index(d);
            let base = d.max(0) as usize;
            let b = &mut self.blocks[bi];
            for jr in 0..b.nrows() {
                let u = C64::from_polar(1.0, -phi * (jr + base) as f64);
                for jc in 0..b.ncols() {
                    b[[jr, jc]] *= u;
                }
            }
        }
    }

    /// Conjugate by the returned-mode phase shifter: `self <-
    /// U(phi) self U†(phi)`, i.e. entry `((k,m),(k',m'))` picks up
    /// `exp(-i phi (k - k'))`.
    pub fn conjugate_phase(&mut self, phi: f64) {
        if phi == 0.0 {
            return;
        }
        // Within one block, k - k' = jr - jc; the offset cancels.
        for b in &mut self.blocks {
            for jr in 0..b.nrows() {
                for jc in 0..b.ncols() {
                    let diff = jr as f64 - jc as f64;
                    b[[jr, jc]] *= C64::from_polar(1.0, -phi * diff);
                }
            }
        }
    }

    /// Diagonal in the `(k, m)` grid: `out[k][m] = <k,m|X|k,m>` (real part;
    /// the imaginary part of a Hermitian operator's diagonal is zero).
    pub fn diagonal_km(&self) -> Array2<f64> {
        let n = self.per_mode_max + 1;
        let mut out = Array2::<f64>::zeros((n, n));
        for d in self.diffs() {
            let b = &self.blocks[self.block_index(d)];
            for j in 0..b.nrows() {
                let (k, m) = self.km(d, j);
                out[[k, m]] = b[[j, j]].re;
            }
        }
        out
    }

    /// `diag(B† X B)` over the `(k, m)` grid without forming the product:
    /// entry `(k, m)` is `col† X col` for the matching column of `B`.
    pub fn sandwich_diagonal(x: &Self, b: &Self) -> Array2<f64> {
        assert_eq!(x.per_mode_max, b.per_mode_max);
        let n = x.per_mode_max + 1;
        let mut out = Array2::<f64>::zeros((n, n));
        for d in x.diffs() {
            let bi = x.block_index(d);
            let xb = &x.blocks[bi];
            let bb = &b.blocks[bi];
            let y = xb.dot(bb);
            for jc in 0..bb.ncols() {
                let (k, m) = x.km(d, jc);
                let mut acc = C64::new(0.0, 0.0);
                for jr in 0..bb.nrows() {
                    acc += bb[[jr, jc]].conj() * y[[jr, jc]];
                }
                out[[k, m]] = acc.re;
            }
        }
        out
    }
}

/// Two-mode squeezer in block form. Infinite ladder sums reduce to finite
/// contractions per element, so entries are exact up to rounding; only the
/// block dimension is truncated.
///
/// Each element starts from one log-factorial evaluation and walks the
/// contraction index by term ratios; [`tms_element`] is the plain reference
/// evaluation of the same sum.
pub fn tms_blocks(params: SqueezeParams, per_mode_max: usize) -> BlockDiagOp {
    let tau = params.tau;
    let nu = params.nu_c;
    let nu2 = nu * nu;
    let sq: Vec<f64> = (0..=per_mode_max + 1).map(|i| (i as f64).sqrt()).collect();
    let inv: Vec<f64> = (0..=per_mode_max + 1)
        .map(|i| if i == 0 { 0.0 } else { 1.0 / i as f64 })
        .collect();
    let mut out = BlockDiagOp::zeros(per_mode_max);
    for d in -(per_mode_max as i64)..=per_mode_max as i64 {
        let bi = out.block_index(d);
        let n = per_mode_max + 1 - d.unsigned_abs() as usize;
        let d_plus = d.max(0) as usize;
        let d_minus = (-d).max(0) as usize;
        let mut b = Array2::<C64>::zeros((n, n));
        let mut col = vec![0.0f64; n];
        for jc in 0..n {
            let (k_in, m_in) = (jc + d_plus, jc + d_minus);
            col.iter_mut().for_each(|x| *x = 0.0);
            // Disentangled action exp(-tau aI†aR†) nu^{-(nI+nR+1)} exp(tau aI aR):
            // walk down i contraction rungs, then spread back up over a rungs.
            // down(i) = tau^i sqrt(k!m!/((k-i)!(m-i)!)) / i! * nu^{-(k+m-2i+1)}
            let mut down = nu.powi(-((k_in + m_in + 1) as i32));
            for i in 0..=jc {
                if i > 0 {
                    down *= tau * sq[k_in - i + 1] * sq[m_in - i + 1] * nu2 * inv[i];
                }
                if down == 0.0 {
                    break;
                }
                // up(a) = (-tau)^a sqrt((kb+a)!(mb+a)!/(kb!mb!)) / a!
                let mut up = down;
                let base = jc - i;
                let (kb, mb) = (base + d_plus, base + d_minus);
                col[base] += up;
                for a in 1..n - base {
                    up *= -tau * sq[kb + a] * sq[mb + a] * inv[a];
                    col[base + a] += up;
                }
            }
            for jr in 0..n {
                if col[jr] != 0.0 {
                    b[[jr, jc]] = C64::new(col[jr], 0.0);
                }
            }
        }
        out.blocks[bi] = b;
    }
    out
}

/// Phase shifter on mode R in block form.
pub fn phase_blocks(phi: f64, per_mode_max: usize) -> BlockDiagOp {
    let mut out = BlockDiagOp::zeros(per_mode_max);
    for d in -(per_mode_max as i64)..=per_mode_max as i64 {
        let bi = out.block_index(d);
        let n = per_mode_max + 1 - d.unsigned_abs() as usize;
        let mut b = Array2::<C64>::zeros((n, n));
        for j in 0..n {
            let (k, _) = out.km(d, j);
            b[[j, j]] = C64::from_polar(1.0, -phi * k as f64);
        }
        out.blocks[bi] = b;
    }
    out
}
