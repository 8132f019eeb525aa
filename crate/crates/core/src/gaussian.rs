//! Gaussian model of the lossy thermal-noise bosonic channel.
//!
//! Quadrature convention: `x = a + a†`, `p = -i(a - a†)`, vacuum covariance
//! is the identity, so a thermal mode with occupancy `n` has variance
//! `2n + 1`. The covariance vector is ordered `(x_I, p_I, x_R, p_R)`.
//!
//! The channel mixes the signal mode with a thermal environment of mean
//! photon number `n_T = n_B / (1 - theta)` on a beamsplitter of transmittance
//! `theta` and applies a phase shift `gamma` to the returned mode. Pinning
//! `n_B` rather than `n_T` keeps the added noise `(1 - theta)(2 n_T + 1) =
//! (1 - theta) + 2 n_B` finite at `theta = 1` and stops the environment from
//! leaking information about `theta`.

use ndarray::{array, Array2};
use num_complex::Complex64 as C64;

use crate::error::{QlossError, Result};
use crate::fock::{tms_blocks, BlockDiagOp, FockCutoff, SqueezeParams, TwoModeOperator};
use crate::linalg;

/// Physical scenario: transmittance, phase offset, probe and background
/// photon numbers.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelParams {
    /// Power transmittance, in (0, 1].
    pub theta: f64,
    /// Channel phase offset, radians in (-pi, pi].
    pub gamma: f64,
    /// Mean probe photons per mode.
    pub n_s: f64,
    /// Background photons per mode.
    pub n_b: f64,
}

impl ChannelParams {
    pub fn new(theta: f64, gamma: f64, n_s: f64, n_b: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(QlossError::InvalidConfig(format!(
                "theta must lie in (0, 1], got {theta}"
            )));
        }
        if !(n_s >= 0.0) {
            return Err(QlossError::InvalidConfig("n_s must be >= 0".into()));
        }
        if !(n_b > 0.0) {
            return Err(QlossError::InvalidConfig("n_b must be > 0".into()));
        }
        if !(gamma > -std::f64::consts::PI && gamma <= std::f64::consts::PI) {
            return Err(QlossError::InvalidConfig(
                "gamma must lie in (-pi, pi]".into(),
            ));
        }
        Ok(Self {
            theta,
            gamma,
            n_s,
            n_b,
        })
    }

    /// Mean thermal photons of the environment, `n_B / (1 - theta)`.
    /// Infinite at `theta = 1`; the product entering the covariance stays
    /// finite there.
    pub fn n_thermal(&self) -> f64 {
        self.n_b / (1.0 - self.theta)
    }

    pub fn with_theta(&self, theta: f64) -> Self {
        Self { theta, ..*self }
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self { gamma, ..*self }
    }
}

/// Zero-mean two-mode Gaussian state in the (I, R) quadrature ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: [f64; 4],
    pub cov: Array2<f64>,
}

impl GaussianState {
    /// Smallest eigenvalue of `cov + i Omega`; physical states have it
    /// >= -tolerance.
    pub fn physicality_margin(&self) -> f64 {
        let mut m = Array2::<C64>::zeros((4, 4));
        for i in 0..4 {
            for j in 0..4 {
                m[[i, j]] = C64::new(self.cov[[i, j]], 0.0);
            }
        }
        // Omega = [[0, 1], [-1, 0]] per mode in (x, p) ordering.
        for b in [0, 2] {
            m[[b, b + 1]] += C64::new(0.0, 1.0);
            m[[b + 1, b]] += C64::new(0.0, -1.0);
        }
        let (w, _) = linalg::eigh(&m);
        w[0]
    }

    pub fn check_physical(&self) -> Result<()> {
        let min_eig = self.physicality_margin();
        if min_eig < -1e-10 {
            return Err(QlossError::NonPhysicalCovariance { min_eig });
        }
        Ok(())
    }
}

/// Covariance of the idler/returned-probe state when a TMSV probe with
/// `n_s` photons per mode is sent through the channel.
pub fn output_covariance(p: &ChannelParams) -> GaussianState {
    let v_i = 2.0 * p.n_s + 1.0;
    let v_r = p.theta * (2.0 * p.n_s + 1.0) + (1.0 - p.theta) + 2.0 * p.n_b;
    let c = p.theta.sqrt() * 2.0 * (p.n_s * (p.n_s + 1.0)).sqrt();
    let (cg, sg) = (p.gamma.cos(), p.gamma.sin());
    // Cross block c * Z rotated by the phase on mode R.
    let cov = array![
        [v_i, 0.0, c * cg, -c * sg],
        [0.0, v_i, -c * sg, -c * cg],
        [c * cg, -c * sg, v_r, 0.0],
        [-c * sg, -c * cg, 0.0, v_r],
    ];
    GaussianState {
        mean: [0.0; 4],
        cov,
    }
}

/// Normal form of the output state: a two-mode squeezer `S†(zeta)` acting on
/// a thermal product with occupancies `N1` (returned mode) and `N2` (idler),
/// followed by a phase shift `gamma` on the returned mode.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SqueezedThermalForm {
    pub zeta: f64,
    pub n1: f64,
    pub n2: f64,
    pub gamma: f64,
}

impl SqueezedThermalForm {
    /// `mu = cosh zeta`.
    pub fn mu(&self) -> f64 {
        self.zeta.cosh()
    }

    /// `nu = -sinh zeta`.
    pub fn nu(&self) -> f64 {
        -self.zeta.sinh()
    }

    /// Covariance reconstructed from the normal form.
    pub fn reconstruct_covariance(&self) -> Array2<f64> {
        let t1 = 2.0 * self.n1 + 1.0;
        let t2 = 2.0 * self.n2 + 1.0;
        let (c, s) = (self.zeta.cosh(), self.zeta.sinh());
        let v_i = c * c * t2 + s * s * t1;
        let v_r = c * c * t1 + s * s * t2;
        let cx = c * s * (t1 + t2);
        let (cg, sg) = (self.gamma.cos(), self.gamma.sin());
        array![
            [v_i, 0.0, cx * cg, -cx * sg],
            [0.0, v_i, -cx * sg, -cx * cg],
            [cx * cg, -cx * sg, v_r, 0.0],
            [-cx * sg, -cx * cg, 0.0, v_r],
        ]
    }
}

/// Decompose a covariance of the phase-shifted two-mode squeezed thermal
/// family into `(zeta, N1, N2, gamma)`. The branch `zeta >= 0` is taken; a
/// negative cross block is absorbed into `gamma + pi`.
pub fn williamson_two_mode(g: &GaussianState) -> Result<SqueezedThermalForm> {
    g.check_physical()?;
    let cov = &g.cov;
    let v_i = 0.5 * (cov[[0, 0]] + cov[[1, 1]]);
    let v_r = 0.5 * (cov[[2, 2]] + cov[[3, 3]]);
    // Cross block has the symmetric traceless form
    // [[c cos g, -c sin g], [-c sin g, -c cos g]].
    let c_cos = 0.5 * (cov[[0, 2]] - cov[[1, 3]]);
    let c_sin = -0.5 * (cov[[0, 3]] + cov[[1, 2]]);
    let c = (c_cos * c_cos + c_sin * c_sin).sqrt();
    let gamma = if c > 1e-14 {
        c_sin.atan2(c_cos)
    } else {
        0.0
    };
    let arg = 2.0 * c / (v_i + v_r);
    if !(arg < 1.0) {
        return Err(QlossError::NonPhysicalCovariance { min_eig: arg - 1.0 });
    }
    let zeta = 0.5 * arg.atanh();
    let sum_sq = (v_i + v_r) * (v_i + v_r) - 4.0 * c * c;
    let t_sum = sum_sq.sqrt();
    let t_diff = v_r - v_i;
    let t1 = 0.5 * (t_sum + t_diff);
    let t2 = 0.5 * (t_sum - t_diff);
    let mut n1 = 0.5 * (t1 - 1.0);
    let mut n2 = 0.5 * (t2 - 1.0);
    for n in [&mut n1, &mut n2] {
        if *n < 0.0 {
            if *n < -1e-9 {
                return Err(QlossError::NonPhysicalCovariance { min_eig: *n });
            }
            *n = 0.0;
        }
    }
    let form = SqueezedThermalForm {
        zeta,
        n1,
        n2,
        gamma,
    };
    let recon = form.reconstruct_covariance();
    let residual = (&recon - cov)
        .iter()
        .map(|x| x.abs())
        .fold(0.0f64, f64::max);
    if residual > 1e-9 {
        return Err(QlossError::NormalFormResidual { residual });
    }
    Ok(form)
}

/// Thermal weight `r_{s,t} = N1^s N2^t / ((1+N1)^{s+1} (1+N2)^{t+1})`.
pub fn r_weight(s: usize, t: usize, form: &SqueezedThermalForm) -> f64 {
    let one = |n: f64, idx: usize| -> f64 {
        // n^idx / (1+n)^{idx+1}, safe at n = 0.
        if n == 0.0 {
            if idx == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            ((idx as f64) * (n.ln() - (1.0 + n).ln()) - (1.0 + n).ln()).exp()
        }
    };
    one(form.n1, s) * one(form.n2, t)
}

/// Diagonal of the thermal core in block form: entry `(s, t)` carries
/// `r_{s,t}` with `s` the returned-mode index.
pub fn r_diag_blocks(form: &SqueezedThermalForm, per_mode_max: usize) -> BlockDiagOp {
    let mut out = BlockDiagOp::zeros(per_mode_max);
    for d in -(per_mode_max as i64)..=per_mode_max as i64 {
        let bi = out.block_index(d);
        let n = per_mode_max + 1 - d.unsigned_abs() as usize;
        let mut b = Array2::<C64>::zeros((n, n));
        for j in 0..n {
            let (s, t) = out.km(d, j);
            b[[j, j]] = C64::new(r_weight(s, t, form), 0.0);
        }
        out.blocks[bi] = b;
    }
    out
}

/// Internal working cutoff: the retained grid plus enough margin that the
/// thermal tail and the squeezer ladder tails are negligible at the retained
/// boundary. Element values on the retained grid are then exact to rounding.
pub(crate) fn internal_cutoff(retained_max: usize, form: &SqueezedThermalForm) -> Result<usize> {
    // Thermal tail: geometric ratio per extra photon level.
    let q = (form.n1 / (1.0 + form.n1)).max(form.n2 / (1.0 + form.n2));
    let mut internal = retained_max + retained_max.clamp(16, 32);
    if q > 0.0 {
        let needed = (1e-13f64.ln() / q.ln()).ceil() as usize;
        internal = internal.max(needed);
    }
    if internal > retained_max + 160 {
        return Err(QlossError::CutoffTooSmall {
            context: "internal working cutoff (thermal occupancy too large)",
            deficit: q,
            tail_tol: 1e-13,
        });
    }
    Ok(internal)
}

/// Output density matrix on an enlarged internal space (returned alongside
/// its per-mode cutoff). Entries with both photon numbers at most
/// `retained_max` are exact to rounding; only levels near the internal
/// boundary feel the truncation.
pub(crate) fn density_blocks_internal(
    form: &SqueezedThermalForm,
    retained_max: usize,
) -> Result<(BlockDiagOp, usize)> {
    let internal = internal_cutoff(retained_max, form)?;
    let zeta = SqueezeParams::new(form.zeta)?;
    let s = tms_blocks(zeta, internal);
    let r = r_diag_blocks(form, internal);
    // sigma = U(gamma) S†(zeta) r S(zeta) U†(gamma)
    let mut rotated = s.dagger().matmul(&r).matmul(&s);
    rotated.conjugate_phase(form.gamma);
    Ok((rotated, internal))
}

/// Output density matrix over the conserved-difference blocks, on the
/// retained grid `[0, per_mode_max]^2`. Assembled on an enlarged internal
/// space and cropped, so entries are accurate and the trace deficit equals
/// the mass genuinely outside the retained grid.
pub fn density_blocks(form: &SqueezedThermalForm, per_mode_max: usize) -> Result<BlockDiagOp> {
    let (full, _) = density_blocks_internal(form, per_mode_max)?;
    Ok(crop_blocks(&full, per_mode_max))
}

pub(crate) fn crop_blocks(op: &BlockDiagOp, new_max: usize) -> BlockDiagOp {
    assert!(new_max <= op.per_mode_max);
    let mut out = BlockDiagOp::zeros(new_max);
    for d in -(new_max as i64)..=new_max as i64 {
        let src = &op.blocks[op.block_index(d)];
        let dst = &mut out.blocks[(d + new_max as i64) as usize];
        let n = new_max + 1 - d.unsigned_abs() as usize;
        for jr in 0..n {
            for jc in 0..n {
                dst[[jr, jc]] = src[[jr, jc]];
            }
        }
    }
    out
}

/// Dense Fock representation of the output state. Fails when the retained
/// grid holds less than `1 - tail_tol` of the state.
pub fn density_matrix_fock(
    form: &SqueezedThermalForm,
    cutoff: FockCutoff,
) -> Result<TwoModeOperator> {
    let blocks = density_blocks(form, cutoff.per_mode_max)?;
    let trace = blocks.trace().re;
    let deficit = 1.0 - trace;
    if deficit > cutoff.tail_tol {
        return Err(QlossError::CutoffTooSmall {
            context: "output density matrix trace",
            deficit,
            tail_tol: cutoff.tail_tol,
        });
    }
    Ok(blocks.to_dense(cutoff))
}

/// Per-copy Fisher information about `theta`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FisherInfo {
    pub value: f64,
}

impl FisherInfo {
    pub fn new(value: f64) -> Self {
        debug_assert!(value.is_finite() && value >= -1e-12);
        Self {
            value: value.max(0.0),
        }
    }
}

/// State blocks at a given transmittance for a channel template.
pub(crate) fn state_blocks_at(
    theta: f64,
    template: &ChannelParams,
    per_mode_max: usize,
) -> Result<(SqueezedThermalForm, BlockDiagOp)> {
    let ch = template.with_theta(theta);
    let form = williamson_two_mode(&output_covariance(&ch))?;
    let blocks = density_blocks(&form, per_mode_max)?;
    Ok((form, blocks))
}

/// Central finite difference of the output state with a Richardson step
/// check, step `h = 1e-5 max(theta, 0.1)`.
pub(crate) fn dsigma_finite_difference(
    p: &ChannelParams,
    per_mode_max: usize,
) -> Result<BlockDiagOp> {
    let h = 1e-5 * p.theta.max(0.1);
    if p.theta - h <= 0.0 || p.theta + h > 1.0 {
        return Err(QlossError::DerivativeStep(format!(
            "theta = {} too close to the boundary for step {h}",
            p.theta
        )));
    }
    let diff_at = |step: f64| -> Result<BlockDiagOp> {
        let (_, plus) = state_blocks_at(p.theta + step, p, per_mode_max)?;
        let (_, minus) = state_blocks_at(p.theta - step, p, per_mode_max)?;
        Ok(plus.sub_scaled(&minus, 0.5 / step))
    };
    let d_h = diff_at(h)?;
    let d_h2 = diff_at(0.5 * h)?;
    // Richardson: leading O(h^2) error cancels; the step check compares the
    // two estimates.
    let mut extrap = d_h2.clone();
    extrap.scale(C64::new(4.0 / 3.0, 0.0));
    let mut sub = d_h;
    sub.scale(C64::new(-1.0 / 3.0, 0.0));
    extrap.add_assign(&sub);
    Ok(extrap)
}

/// Quantum Fisher information about the transmittance, via the SLD in the
/// truncated Fock basis with a finite-difference state derivative.
pub fn qfi_transmittance(p: &ChannelParams, cutoff: FockCutoff) -> Result<FisherInfo> {
    let (_, sigma) = state_blocks_at(p.theta, p, cutoff.per_mode_max)?;
    let trace = sigma.trace().re;
    if 1.0 - trace > cutoff.tail_tol {
        return Err(QlossError::CutoffTooSmall {
            context: "QFI state trace",
            deficit: 1.0 - trace,
            tail_tol: cutoff.tail_tol,
        });
    }
    let dsigma = dsigma_finite_difference(p, cutoff.per_mode_max)?;
    let j = crate::receiver::qfi_from_blocks(&sigma, &dsigma);
    Ok(FisherInfo::new(j))
}

/// Independent QFI route: Uhlmann fidelity between neighbouring states with
/// Richardson extrapolation over the step,
/// `J = 8 (1 - F(sigma(theta - e), sigma(theta + e))) / (2e)^2`.
pub fn qfi_from_fidelity(p: &ChannelParams, cutoff: FockCutoff) -> Result<FisherInfo> {
    // The step must keep 1 - F well above the truncated-tail floor of the
    // fidelity; the O(eps^2) bias is removed by Richardson extrapolation.
    let eps = 1e-2 * p.theta.max(0.1);
    if p.theta - eps <= 0.0 || p.theta + eps > 1.0 {
        return Err(QlossError::DerivativeStep(format!(
            "theta = {} too close to the boundary for fidelity step {eps}",
            p.theta
        )));
    }
    let estimate = |e: f64| -> Result<f64> {
        let (_, mut minus) = state_blocks_at(p.theta - e, p, cutoff.per_mode_max)?;
        let (_, mut plus) = state_blocks_at(p.theta + e, p, cutoff.per_mode_max)?;
        for s in [&mut minus, &mut plus] {
            let tr = s.trace().re;
            s.scale(C64::new(1.0 / tr, 0.0));
        }
        let mut f = 0.0f64;
        for (a, b) in minus.blocks.iter().zip(&plus.blocks) {
            if a.nrows() == 0 {
                continue;
            }
            let ra = linalg::sqrt_psd(a);
            let inner = ra.dot(b).dot(&ra);
            let (w, _) = linalg::eigh(&inner);
            f += w.iter().map(|&x| x.max(0.0).sqrt()).sum::<f64>();
        }
        Ok(2.0 * (1.0 - f) / (e * e))
    };
    let j1 = estimate(eps)?;
    let j2 = estimate(0.5 * eps)?;
    Ok(FisherInfo::new((4.0 * j2 - j1) / 3.0))
}

/// The six returned-mode trace identities of the output state: closed forms
/// in `(mu, nu, N1, N2)` against the Fock-numeric traces built from
/// [`density_matrix_fock`] and [`ladder_ops`]. Order:
/// `tr(s a†a)`, `tr(s a a†)`, `tr(s a†a†)`, `tr(s a a)`,
/// `tr(s a a† a a†)`, `tr(s a†a a†a)`.
pub fn returned_mode_moments(
    form: &SqueezedThermalForm,
    cutoff: FockCutoff,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mu2 = form.mu() * form.mu();
    let nu2 = form.nu() * form.nu();
    let e1 = mu2 * form.n1 + nu2 * (1.0 + form.n2);
    let closed = vec![
        e1,
        e1 + 1.0,
        0.0,
        0.0,
        1.0 + 3.0 * form.n1 * mu2 + 3.0 * (1.0 + form.n2) * nu2 + 2.0 * e1 * e1,
        form.n1 * mu2 + (1.0 + form.n2) * nu2 + 2.0 * e1 * e1,
    ];
    let sigma = density_matrix_fock(form, cutoff)?;
    let (a, adag) = crate::fock::ladder_ops(cutoff, crate::fock::Mode::Returned);
    let trace_with = |x: &TwoModeOperator| -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..sigma.dim() {
            for j in 0..sigma.dim() {
                acc += sigma.entries[[i, j]] * x.entries[[j, i]];
            }
        }
        acc.re
    };
    let num_op = adag.matmul(&a)?;
    let anti_op = a.matmul(&adag)?;
    let numeric = vec![
        trace_with(&num_op),
        trace_with(&anti_op),
        trace_with(&adag.matmul(&adag)?),
        trace_with(&a.matmul(&a)?),
        trace_with(&anti_op.matmul(&anti_op)?),
        trace_with(&num_op.matmul(&num_op)?),
    ];
    Ok((closed, numeric))
}
