//! Refinement-stage measurement: SLD construction, the TMS + PNR outcome
//! distribution and its transmittance derivative, classical Fisher
//! information, and receiver squeeze selection.
//!
//! The outcome distribution is computed by two independent routes that are
//! kept permanently as cross-validation:
//!
//! * route A, [`pmf_explicit_sums`]: the literal nested contraction sums
//!   over the squeezer ladders, term by term;
//! * route B, [`pmf_tms_pnr`]: the operator sandwich
//!   `<k,m| S†(w) U(-g) sigma U(g) S(w) |k,m>` over conserved-difference
//!   blocks on an enlarged internal space.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{QlossError, Result};
use crate::fock::{
    ln_fact, tms_blocks, BlockDiagOp, FockCutoff, SqueezeParams, TwoModeOperator,
};
use crate::gaussian::{
    self, output_covariance, r_weight, williamson_two_mode, ChannelParams, FisherInfo,
    SqueezedThermalForm,
};
use crate::linalg;
use crate::optimize;

/// Refinement receiver: squeeze `omega`, phase correction `gamma_hat`, and
/// the retained outcome cutoff.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReceiverConfig {
    pub omega: SqueezeParams,
    pub gamma_hat: f64,
    pub cutoff: FockCutoff,
}

/// Outcome probabilities over the retained `(k, m)` grid.
#[derive(Debug, Clone)]
pub struct PmfTable {
    pub probs: Array2<f64>,
    pub tail_mass: f64,
    pub theta: f64,
    pub config: ReceiverConfig,
}

impl PmfTable {
    pub fn k_max(&self) -> usize {
        self.probs.nrows() - 1
    }

    pub fn prob(&self, k: usize, m: usize) -> f64 {
        self.probs[[k, m]]
    }
}

fn clip_probs(probs: &mut Array2<f64>, context: &'static str) -> Result<()> {
    for p in probs.iter_mut() {
        if *p < -1e-13 {
            return Err(QlossError::Numeric(format!(
                "{context}: probability {p:e} below the clipping floor"
            )));
        }
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    Ok(())
}

/// Shared state pieces for repeated route-B evaluations against one output
/// state: the state and its Lindblad derivative on the internal space.
pub struct ReceiverSweep {
    pub sigma: BlockDiagOp,
    pub dsigma: BlockDiagOp,
    pub internal_max: usize,
    pub retained_max: usize,
    pub form: SqueezedThermalForm,
    pub theta: f64,
}

impl ReceiverSweep {
    /// Prepare the output state of `channel` at transmittance `theta` for
    /// receiver sweeps with retained grid `[0, per_mode_max]^2`.
    pub fn new(theta: f64, channel: &ChannelParams, per_mode_max: usize) -> Result<Self> {
        let ch = channel.with_theta(theta);
        let form = williamson_two_mode(&output_covariance(&ch))?;
        let (sigma, internal_max) = gaussian::density_blocks_internal(&form, per_mode_max)?;
        let dsigma = lindblad_dtheta_blocks(&sigma, theta, channel.n_b);
        Ok(Self {
            sigma,
            dsigma,
            internal_max,
            retained_max: per_mode_max,
            form,
            theta,
        })
    }

    /// `U(gamma_check) S(omega)` on the internal space; the operation order
    /// matches `pmf_tms_pnr` exactly.
    pub fn receiver_blocks(&self, omega: SqueezeParams, gamma_check: f64) -> BlockDiagOp {
        let mut s = tms_blocks(omega, self.internal_max);
        s.scale_rows_phase(gamma_check);
        s
    }

    fn cropped_diag(&self, x: &BlockDiagOp, b: &BlockDiagOp) -> Array2<f64> {
        let full = BlockDiagOp::sandwich_diagonal(x, b);
        let n = self.retained_max + 1;
        let mut out = Array2::<f64>::zeros((n, n));
        for k in 0..n {
            for m in 0..n {
                out[[k, m]] = full[[k, m]];
            }
        }
        out
    }

    /// Retained outcome probabilities for one receiver setting.
    pub fn probs(&self, omega: SqueezeParams, gamma_check: f64) -> Array2<f64> {
        let b = self.receiver_blocks(omega, gamma_check);
        self.cropped_diag(&self.sigma, &b)
    }

    /// Retained theta-derivative of the outcome probabilities.
    pub fn dprobs(&self, omega: SqueezeParams, gamma_check: f64) -> Array2<f64> {
        let b = self.receiver_blocks(omega, gamma_check);
        self.cropped_diag(&self.dsigma, &b)
    }

    /// Classical Fisher information of one receiver setting.
    pub fn cfi(&self, omega: SqueezeParams, gamma_check: f64) -> f64 {
        let b = self.receiver_blocks(omega, gamma_check);
        let p = self.cropped_diag(&self.sigma, &b);
        let dp = self.cropped_diag(&self.dsigma, &b);
        fisher_sum(&p, &dp)
    }

    /// Quantum Fisher information of the prepared state, from the SLD built
    /// with the exact Lindblad derivative. The state tail beyond the
    /// retained grid is certified negligible, so the eigenproblem is solved
    /// there rather than on the enlarged workspace.
    pub fn qfi(&self) -> f64 {
        let sigma = crate::gaussian::crop_blocks(&self.sigma, self.retained_max);
        let dsigma = crate::gaussian::crop_blocks(&self.dsigma, self.retained_max);
        qfi_from_blocks(&sigma, &dsigma)
    }
}

/// Route B: outcome p.m.f. of the TMS + PNR receiver by operator sandwich.
///
/// `theta` parameterizes the measured state; the receiver (`omega`,
/// `gamma_hat`) and the channel's true phase enter through
/// `S(zeta) U(gamma_hat - gamma_t) S(omega)`.
pub fn pmf_tms_pnr(
    theta: f64,
    config: &ReceiverConfig,
    channel: &ChannelParams,
) -> Result<PmfTable> {
    let sweep = ReceiverSweep::new(theta, channel, config.cutoff.per_mode_max)?;
    pmf_from_sweep(&sweep, config)
}

/// Route B from an already-prepared sweep (used by the per-trial hot path;
/// bitwise identical to [`pmf_tms_pnr`]).
pub fn pmf_from_sweep(sweep: &ReceiverSweep, config: &ReceiverConfig) -> Result<PmfTable> {
    let mut probs = sweep.probs(config.omega, config.gamma_hat);
    clip_probs(&mut probs, "pmf route B")?;
    let tail_mass = 1.0 - probs.sum();
    if tail_mass > config.cutoff.tail_tol {
        return Err(QlossError::CutoffTooSmall {
            context: "p.m.f. normalization",
            deficit: tail_mass,
            tail_tol: config.cutoff.tail_tol,
        });
    }
    Ok(PmfTable {
        probs,
        tail_mass: tail_mass.max(0.0),
        theta: sweep.theta,
        config: *config,
    })
}

/// Route A: the explicit nested sums for
/// `sum_s r_{s,t'} |<s,t'| S(zeta) U(gamma_hat - gamma_t) S(omega) |k,m>|^2`
/// with `t' = s - k + m`. Kept as permanent cross-validation of route B.
pub fn pmf_explicit_sums(
    theta: f64,
    config: &ReceiverConfig,
    channel: &ChannelParams,
) -> Result<PmfTable> {
    pmf_explicit_sums_impl(theta, config, channel, false)
}

/// Route A with an optional sign flip of the receiver squeezer, used by the
/// validation suite as a mutation probe: a convention error of this kind
/// must show up as route disagreement.
pub fn pmf_explicit_sums_impl(
    theta: f64,
    config: &ReceiverConfig,
    channel: &ChannelParams,
    flip_squeezer_sign: bool,
) -> Result<PmfTable> {
    let ch = channel.with_theta(theta);
    let form = williamson_two_mode(&output_covariance(&ch))?;
    let delta = config.gamma_hat - form.gamma;
    let omega = if flip_squeezer_sign {
        SqueezeParams::new(-config.omega.r)?
    } else {
        config.omega
    };
    let max = config.cutoff.per_mode_max;
    let n = max + 1;
    let mut probs = Array2::<f64>::zeros((n, n));
    for k in 0..n {
        for m in 0..n {
            probs[[k, m]] = pmf_cell_explicit(k, m, &form, omega, form.zeta, delta);
        }
    }
    clip_probs(&mut probs, "pmf route A")?;
    let tail_mass = 1.0 - probs.sum();
    if tail_mass > config.cutoff.tail_tol {
        return Err(QlossError::CutoffTooSmall {
            context: "p.m.f. normalization (explicit sums)",
            deficit: tail_mass,
            tail_tol: config.cutoff.tail_tol,
        });
    }
    Ok(PmfTable {
        probs,
        tail_mass: tail_mass.max(0.0),
        theta,
        config: *config,
    })
}

/// One cell of route A: the `s` sum runs until its certified geometric tail
/// bound (amplitudes never exceed one) drops below 1e-16 of the accumulated
/// probability.
fn pmf_cell_explicit(
    k: usize,
    m: usize,
    form: &SqueezedThermalForm,
    omega: SqueezeParams,
    zeta: f64,
    delta: f64,
) -> f64 {
    let q1 = form.n1 / (1.0 + form.n1);
    let q2 = form.n2 / (1.0 + form.n2);
    let ratio = q1 * q2;
    let s0 = k.saturating_sub(m);
    let mut total = 0.0f64;
    let zeta_p = SqueezeParams::new(zeta).expect("finite zeta");
    for s in s0..s0 + 4000 {
        let t = s + m - k; // t' = s - k + m >= 0 by construction
        let w = r_weight(s, t, form);
        let tail_bound = if ratio > 0.0 {
            w * ratio / (1.0 - ratio)
        } else {
            0.0
        };
        if w == 0.0 && tail_bound == 0.0 {
            if form.n1 == 0.0 || form.n2 == 0.0 {
                // Degenerate occupancy: only finitely many terms contribute.
                if s > s0 + 2 {
                    break;
                }
            } else {
                break;
            }
        }
        if w > 0.0 {
            let amp = amplitude_explicit(s, t, k, m, omega, zeta_p, delta);
            total += w * amp.norm_sqr();
        }
        if tail_bound < 1e-16 * total.max(1e-30) && s > s0 {
            break;
        }
    }
    total
}

/// The triple contraction sum for
/// `<s,t| S(zeta) U(delta) S(omega) |k,m>`, with the inner `i2` sum iterated
/// by term ratios and the unbounded ladder sum over `a1` stopped once its
/// contributions fall below 1e-17 of the running amplitude scale.
fn amplitude_explicit(
    s: usize,
    t: usize,
    k: usize,
    m: usize,
    omega: SqueezeParams,
    zeta: SqueezeParams,
    delta: f64,
) -> C64 {
    debug_assert_eq!(s + m, t + k);
    let (tau1, nu1) = (omega.tau, omega.nu_c);
    let (tau2, nu2) = (zeta.tau, zeta.nu_c);
    let ln_nu1 = nu1.ln();
    let ln_nu2 = nu2.ln();
    let ln_t1 = if tau1 == 0.0 { 0.0 } else { tau1.abs().ln() };
    let ln_t2 = if tau2 == 0.0 { 0.0 } else { tau2.abs().ln() };
    let mut amp = C64::new(0.0, 0.0);
    let mut scale = 0.0f64; // largest |contribution| seen so far
    for i1 in 0..=k.min(m) {
        let mut small_run = 0usize;
        for a1 in 0..4000usize {
            let kp = k - i1 + a1; // intermediate R photon number
            let mp = m - i1 + a1;
            let t1_pow = a1 + i1;
            if tau1 == 0.0 && t1_pow > 0 {
                break;
            }
            // First squeezer factor (real magnitude and sign).
            let ln_first = (t1_pow as f64) * ln_t1
                - ((k + m + 1 - 2 * i1) as f64) * ln_nu1
                + 0.5 * (ln_fact(k) + ln_fact(m) + ln_fact(kp) + ln_fact(mp))
                - ln_fact(a1)
                - ln_fact(i1)
                - ln_fact(k - i1)
                - ln_fact(m - i1);
            let mut sign_first = if a1 % 2 == 1 { -1.0 } else { 1.0 };
            if tau1 < 0.0 && t1_pow % 2 == 1 {
                sign_first = -sign_first;
            }
            let first = sign_first * ln_first.exp();

            // Inner sum over i2 with a2 = s - k + i1 - a1 + i2 >= 0.
            let i2_lo = (k as i64 - s as i64 - i1 as i64 + a1 as i64).max(0) as usize;
            let i2_hi = kp.min(mp);
            let mut inner = 0.0f64;
            if i2_lo <= i2_hi {
                let a2_lo = (s + i1 + i2_lo) as i64 - (k + a1) as i64;
                debug_assert!(a2_lo >= 0);
                let a2_lo = a2_lo as usize;
                let t2_pow_lo = a2_lo + i2_lo;
                if !(tau2 == 0.0 && t2_pow_lo > 0) {
                    let ln_sec = (t2_pow_lo as f64) * ln_t2
                        - ((k + m + 1 + 2 * a1 - 2 * i1 - 2 * i2_lo) as f64) * ln_nu2
                        + 0.5 * (ln_fact(kp) + ln_fact(mp) + ln_fact(s) + ln_fact(t))
                        - ln_fact(a2_lo)
                        - ln_fact(i2_lo)
                        - ln_fact(kp - i2_lo)
                        - ln_fact(mp - i2_lo);
                    let mut sign_sec = if a2_lo % 2 == 1 { -1.0 } else { 1.0 };
                    if tau2 < 0.0 && t2_pow_lo % 2 == 1 {
                        sign_sec = -sign_sec;
                    }
                    let mut term = sign_sec * ln_sec.exp();
                    inner = term;
                    let mut a2 = a2_lo;
                    for i2 in i2_lo..i2_hi {
                        // term(i2+1)/term(i2)
                        term *= -tau2 * tau2 * nu2 * nu2 * ((kp - i2) as f64)
                            * ((mp - i2) as f64)
                            / (((a2 + 1) * (i2 + 1)) as f64);
                        inner += term;
                        a2 += 1;
                    }
                } else if tau2 == 0.0 {
                    // zeta = 0: S(zeta) is the identity; only i2 with
                    // a2 = 0 = i2 contributes, requiring s = kp and t = mp.
                    if s == kp && t == mp {
                        inner = 1.0;
                    }
                }
            }
            let contribution = first * inner;
            let mag = contribution.abs();
            if mag > scale {
                scale = mag;
            }
            if mag > 0.0 {
                let phase = C64::from_polar(1.0, -delta * kp as f64);
                amp += phase * contribution;
            }
            // The a1 ladder converges geometrically; stop after the terms
            // stay negligible relative to the running scale.
            if a1 > 0 && mag < 1e-17 * scale.max(1e-280) {
                small_run += 1;
                if small_run >= 3 {
                    break;
                }
            } else {
                small_run = 0;
            }
        }
    }
    amp
}

/// Exact transmittance derivative of the output state from the loss
/// Lindbladian acting on the returned mode:
/// `d sigma = -(1/2 theta) [ (n_B + 1) L[a] + n_B L[a†] ] sigma`.
pub fn lindblad_dtheta_blocks(sigma: &BlockDiagOp, theta: f64, n_b: f64) -> BlockDiagOp {
    let max = sigma.per_mode_max;
    let get = |k: i64, m: i64, kp: i64, mp: i64| -> C64 {
        if k < 0 || m < 0 || kp < 0 || mp < 0 {
            return C64::new(0.0, 0.0);
        }
        let (k, m, kp, mp) = (k as usize, m as usize, kp as usize, mp as usize);
        if k > max || m > max || kp > max || mp > max {
            return C64::new(0.0, 0.0);
        }
        if k as i64 - m as i64 != kp as i64 - mp as i64 {
            return C64::new(0.0, 0.0);
        }
        let d = k as i64 - m as i64;
        sigma.blocks[sigma.block_index(d)][[k.min(m), kp.min(mp)]]
    };
    let mut out = BlockDiagOp::zeros(max);
    let w_down = n_b + 1.0; // loss channel weight on L[a]
    let w_up = n_b;
    let pref = -0.5 / theta;
    for d in -(max as i64)..=max as i64 {
        let bi = out.block_index(d);
        let n = max + 1 - d.unsigned_abs() as usize;
        let mut b = Array2::<C64>::zeros((n, n));
        for jr in 0..n {
            let (k, m) = out.km(d, jr);
            for jc in 0..n {
                let (kp, mp) = out.km(d, jc);
                let (ki, mi, kpi, mpi) = (k as i64, m as i64, kp as i64, mp as i64);
                let s_here = get(ki, mi, kpi, mpi);
                // L[a] sigma = 2 a sigma a† - a†a sigma - sigma a†a
                let mut acc = (2.0 * ((k + 1) as f64 * (kp + 1) as f64).sqrt()
                    * get(ki + 1, mi, kpi + 1, mpi)
                    - (k + kp) as f64 * s_here)
                    * w_down;
                // L[a†] sigma = 2 a† sigma a - a a† sigma - sigma a a†
                acc += (2.0 * ((k * kp) as f64).sqrt() * get(ki - 1, mi, kpi - 1, mpi)
                    - ((k + 1) + (kp + 1)) as f64 * s_here)
                    * w_up;
                b[[jr, jc]] = acc * pref;
            }
        }
        out.blocks[bi] = b;
    }
    out
}

/// Retained `(k, m)` grid of the transmittance derivative of the p.m.f.
pub fn pmf_theta_derivative(
    theta: f64,
    config: &ReceiverConfig,
    channel: &ChannelParams,
) -> Result<Array2<f64>> {
    let sweep = ReceiverSweep::new(theta, channel, config.cutoff.per_mode_max)?;
    Ok(sweep.dprobs(config.omega, config.gamma_hat))
}

fn fisher_sum(p: &Array2<f64>, dp: &Array2<f64>) -> f64 {
    // Probability floor keeps truncation noise out of the division.
    const FLOOR: f64 = 1e-14;
    let mut acc = 0.0f64;
    for (pi, di) in p.iter().zip(dp.iter()) {
        if *pi > FLOOR {
            acc += di * di / pi;
        }
    }
    acc
}

/// Classical Fisher information of a p.m.f. table and its derivative grid.
pub fn classical_fisher_info(pmf: &PmfTable, dpmf: &Array2<f64>) -> Result<FisherInfo> {
    if pmf.probs.dim() != dpmf.dim() {
        return Err(QlossError::DimensionMismatch(
            "p.m.f. and derivative grids differ in shape".into(),
        ));
    }
    Ok(FisherInfo::new(fisher_sum(&pmf.probs, dpmf)))
}

/// Hermitian SLD together with its eigendecomposition (the measurement).
#[derive(Debug, Clone)]
pub struct SldResult {
    pub lambda_op: TwoModeOperator,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Array2<C64>,
    /// Frobenius norm of `2 dsigma - (L sigma + sigma L)`.
    pub defining_residual: f64,
    /// Max deviation of `sum_i |v_i><v_i|` from the identity.
    pub completeness_residual: f64,
    /// Fraction of matrix elements suppressed by the rank guard.
    pub guarded_fraction: f64,
    pub rank_warning: bool,
}

impl SldResult {
    /// Rank-one projector onto eigenvector `i`.
    pub fn projector(&self, i: usize) -> TwoModeOperator {
        let n = self.eigenvectors.nrows();
        let mut entries = Array2::<C64>::zeros((n, n));
        for r in 0..n {
            for c in 0..n {
                entries[[r, c]] = self.eigenvectors[[r, i]] * self.eigenvectors[[c, i]].conj();
            }
        }
        TwoModeOperator {
            entries,
            cutoff: self.lambda_op.cutoff,
            hermitian: true,
        }
    }
}

/// Solve the SLD defining relation `2 d sigma = L sigma + sigma L` in the
/// eigenbasis of `sigma`, guarding eigenvalue pairs below
/// `1e-12 x max eigenvalue`.
pub fn sld_operator(sigma: &TwoModeOperator, dsigma: &TwoModeOperator) -> Result<SldResult> {
    if sigma.cutoff.per_mode_max != dsigma.cutoff.per_mode_max {
        return Err(QlossError::DimensionMismatch(
            "sigma and dsigma cutoffs differ".into(),
        ));
    }
    if sigma.hermiticity_defect() > 1e-10 || dsigma.hermiticity_defect() > 1e-10 {
        return Err(QlossError::Numeric(
            "SLD inputs must be Hermitian".into(),
        ));
    }
    let n = sigma.dim();
    let (p, v) = linalg::eigh(&sigma.entries);
    let p_max = p.last().copied().unwrap_or(0.0).max(0.0);
    let rank_tol = 1e-12 * p_max;
    let vdag = linalg::dagger(&v);
    let ds_eig = vdag.dot(&dsigma.entries).dot(&v);
    let mut lam_eig = Array2::<C64>::zeros((n, n));
    let mut guarded = 0usize;
    for i in 0..n {
        for j in 0..n {
            let denom = p[i].max(0.0) + p[j].max(0.0);
            if denom > rank_tol {
                lam_eig[[i, j]] = 2.0 * ds_eig[[i, j]] / denom;
            } else {
                guarded += 1;
            }
        }
    }
    let guarded_fraction = guarded as f64 / (n * n) as f64;
    let lambda = v.dot(&lam_eig).dot(&vdag);
    let lambda_op = TwoModeOperator {
        entries: lambda.clone(),
        cutoff: sigma.cutoff,
        hermitian: true,
    };
    let anti = lambda.dot(&sigma.entries) + sigma.entries.dot(&lambda);
    let resid_mat = dsigma.entries.mapv(|z| z * 2.0) - anti;
    let defining_residual = linalg::frobenius_norm(&resid_mat);
    let (w, vecs) = linalg::eigh(&lambda);
    let vv = vecs.dot(&linalg::dagger(&vecs));
    let completeness_residual = linalg::max_abs(&(&vv - &Array2::<C64>::eye(n)));
    Ok(SldResult {
        lambda_op,
        eigenvalues: w,
        eigenvectors: vecs,
        defining_residual,
        completeness_residual,
        guarded_fraction,
        rank_warning: guarded_fraction > 0.10,
    })
}

/// Quantum Fisher information `tr(L^2 sigma)` from block-diagonal state and
/// derivative, solving the SLD per block with a global rank guard.
pub fn qfi_from_blocks(sigma: &BlockDiagOp, dsigma: &BlockDiagOp) -> f64 {
    let mut p_max = 0.0f64;
    let mut eigs: Vec<(Vec<f64>, Array2<C64>)> = Vec::with_capacity(sigma.blocks.len());
    for b in &sigma.blocks {
        let (w, v) = linalg::eigh(b);
        p_max = p_max.max(w.last().copied().unwrap_or(0.0));
        eigs.push((w, v));
    }
    let rank_tol = 1e-12 * p_max;
    let mut j = 0.0f64;
    for (bi, (w, v)) in eigs.iter().enumerate() {
        let ds = &dsigma.blocks[bi];
        let ds_eig = linalg::dagger(v).dot(ds).dot(v);
        let n = w.len();
        for i in 0..n {
            for l in 0..n {
                let denom = w[i].max(0.0) + w[l].max(0.0);
                if denom > rank_tol {
                    let lam = 2.0 * ds_eig[[i, l]].norm() / denom;
                    j += lam * lam * w[l].max(0.0);
                }
            }
        }
    }
    j
}

/// Result of the receiver squeeze search.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct OmegaSelection {
    pub omega: SqueezeParams,
    pub cfi: f64,
    pub qfi: f64,
    pub ratio: f64,
    /// CFI within 1% of the quantum Fisher information.
    pub certified: bool,
    pub evals: usize,
}

/// Choose the receiver squeeze by maximizing the classical Fisher
/// information of the model at `theta_hat` with the phase correction set to
/// `gamma_hat`. Grid seeding over `[-2, 2]` (adaptively widened on boundary
/// hits) followed by golden-section refinement to 1e-6.
pub fn select_omega(
    theta_hat: f64,
    gamma_hat: f64,
    channel_template: &ChannelParams,
    cutoff: FockCutoff,
) -> Result<OmegaSelection> {
    let model = channel_template.with_theta(theta_hat).with_gamma(gamma_hat);
    let sweep = ReceiverSweep::new(theta_hat, &model, cutoff.per_mode_max)?;
    let qfi = sweep.qfi();
    let cfi_of = |w: f64| -> f64 {
        match SqueezeParams::new(w) {
            Ok(params) => sweep.cfi(params, gamma_hat),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let mut half_width = 2.0f64;
    let result = loop {
        let r = optimize::grid_then_golden_max(
            cfi_of,
            -half_width,
            half_width,
            41,
            1e-6,
            2.0 * half_width / 40.0,
        );
        if !r.on_boundary || half_width >= 8.0 {
            break r;
        }
        half_width *= 2.0;
    };
    let omega = SqueezeParams::new(result.x)?;
    let ratio = if qfi > 0.0 { result.fx / qfi } else { 0.0 };
    if ratio < 0.9 {
        return Err(QlossError::ExistenceRegion { theta_hat, ratio });
    }
    Ok(OmegaSelection {
        omega,
        cfi: result.fx,
        qfi,
        ratio,
        certified: ratio >= 0.99,
        evals: result.evals,
    })
}

/// Outcome of the closed-form lower-bound check on the p.m.f.
#[derive(Debug, Clone, Copy)]
pub struct LowerBoundReport {
    pub ok: bool,
    pub l2: f64,
    pub l3: f64,
    pub violating_cell: Option<(usize, usize, f64, f64)>,
}

/// Check `p(k, m) >= r_{k,m} l3^{k+m} l2^{-(k+m+1)} - 1e-12` on the retained
/// grid, with `l2 >= 1` and `l3` strictly inside (0, 1). Both scalars come
/// from the receiver/state squeeze pair and the residual phase error.
pub fn pmf_lower_bound_check(
    pmf: &PmfTable,
    form: &SqueezedThermalForm,
    config: &ReceiverConfig,
) -> Result<LowerBoundReport> {
    let tau1 = config.omega.tau;
    let nu1 = config.omega.nu_c;
    let tau2 = form.zeta.tanh();
    let nu2 = form.zeta.cosh();
    let delta = config.gamma_hat - form.gamma;
    let cosd = delta.cos();
    let cross = 2.0 * tau1 * tau2 * cosd;
    let l2 = nu1 * nu1 * nu2 * nu2 * (1.0 + tau1 * tau1 * tau2 * tau2 + cross);
    let l3 = (tau1 * tau1 + cross + tau2 * tau2) / (1.0 + tau1 * tau1 * tau2 * tau2 + cross);
    if l2 < 1.0 {
        return Err(QlossError::Numeric(format!("l2 = {l2} < 1")));
    }
    if !(l3 > 0.0 && l3 < 1.0) {
        return Err(QlossError::Numeric(format!("l3 = {l3} outside (0, 1)")));
    }
    let n = pmf.probs.nrows();
    for k in 0..n {
        for m in 0..n {
            let total = (k + m) as f64;
            let bound =
                r_weight(k, m, form) * l3.powf(total) * l2.powf(-(total + 1.0)) - 1e-12;
            let p = pmf.probs[[k, m]];
            if p < bound {
                return Ok(LowerBoundReport {
                    ok: false,
                    l2,
                    l3,
                    violating_cell: Some((k, m, p, bound)),
                });
            }
        }
    }
    Ok(LowerBoundReport {
        ok: true,
        l2,
        l3,
        violating_cell: None,
    })
}
