//! One full two-stage estimation run: preliminary coherent batch, receiver
//! construction at the preliminary estimate, PNR sampling, and the
//! refinement-stage likelihood maximization.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{QlossError, Result};
use crate::fock::{tms_blocks, BlockDiagOp, FockCutoff, SqueezeParams};
use crate::gaussian::{output_covariance, r_weight, williamson_two_mode, ChannelParams};
use crate::heterodyne::{clamp_to_gamma_space, mle_preliminary, sample_heterodyne_rng};
use crate::optimize;
use crate::receiver::{pmf_from_sweep, select_omega, PmfTable, ReceiverConfig, ReceiverSweep};

/// Expand a 64-bit seed into a full ChaCha key deterministically.
fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic, platform-independent generator from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> ChaCha12Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Derive an independent stream seed from a base seed and stream labels.
pub fn derive_seed(base: u64, lane: u64, index: u64) -> u64 {
    let mut state = base ^ lane.rotate_left(24) ^ index.rotate_left(48);
    // A couple of mixing rounds keeps the lanes statistically separated.
    let a = splitmix(&mut state);
    let mut state2 = a ^ lane ^ index;
    splitmix(&mut state2)
}

/// Configuration of a single two-stage run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunConfig {
    pub channel: ChannelParams,
    pub n_total: usize,
    /// Preliminary schedule exponent: `f(n) = ceil(n^q)`.
    pub schedule_q: f64,
    pub cutoff: FockCutoff,
    pub seed: u64,
    /// Lower edge of the refinement parameter space `[theta_lo, 1]`.
    pub theta_lo: f64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.schedule_q > 0.0 && self.schedule_q < 1.0) {
            return Err(QlossError::InvalidConfig(
                "schedule_q must lie in (0, 1)".into(),
            ));
        }
        if !(self.theta_lo > 0.0 && self.theta_lo < 1.0) {
            return Err(QlossError::InvalidConfig(
                "theta_lo must lie in (0, 1)".into(),
            ));
        }
        let f = preliminary_size(self.n_total, self.schedule_q);
        if f < 1 || self.n_total <= 2 * f {
            return Err(QlossError::InvalidConfig(format!(
                "n_total = {} leaves no refinement copies after 2 f(n) = {}",
                self.n_total,
                2 * f
            )));
        }
        Ok(())
    }
}

/// `f(n) = ceil(n^q)`, with a guard against floating-point grazes on exact
/// powers.
pub fn preliminary_size(n_total: usize, q: f64) -> usize {
    let v = (n_total as f64).powf(q);
    let r = v.round();
    let f = if (v - r).abs() < 1e-9 { r } else { v.ceil() };
    (f as usize).max(1)
}

/// Everything recorded about one two-stage trial. Records are
/// self-describing and self-contained: harness statistics are recomputed
/// from archives without re-running the simulation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub n_total: usize,
    pub f_n: usize,
    pub n_refine: usize,
    pub theta_true: f64,
    pub gamma_true: f64,
    /// Raw preliminary transmittance estimate (before clamping).
    pub theta_p_raw: f64,
    /// Clamped preliminary estimate used to build the receiver.
    pub theta_p: f64,
    pub gamma_hat: f64,
    pub prelim_degenerate: bool,
    /// Receiver squeeze chosen at the preliminary estimate.
    pub omega: f64,
    /// CFI(omega*) / QFI at the preliminary estimate.
    pub cfi_ratio: f64,
    pub omega_certified: bool,
    pub theta_r: f64,
    pub loglik_at_max: f64,
    /// Refinement argmax landed within 1e-6 of the parameter-space edge.
    pub boundary_max: bool,
    pub pmf_tail_mass: f64,
    /// PNR draws that fell into the truncated tail and were reassigned.
    pub tail_draws: usize,
    pub omega_evals: usize,
    pub refine_evals: usize,
}

/// Inverse-CDF sampling over the flattened outcome table. Draws landing in
/// the residual tail mass are assigned to the most probable cell; the count
/// of such draws is returned for logging.
pub fn sample_pnr(pmf: &PmfTable, count: usize, seed: u64) -> (Vec<(u16, u16)>, usize) {
    let mut rng = rng_from_seed(seed);
    sample_pnr_rng(pmf, count, &mut rng)
}

pub fn sample_pnr_rng(
    pmf: &PmfTable,
    count: usize,
    rng: &mut ChaCha12Rng,
) -> (Vec<(u16, u16)>, usize) {
    let side = pmf.probs.nrows();
    let dim = side * side;
    let mut cum = Vec::with_capacity(dim);
    let mut acc = 0.0f64;
    let mut best_cell = 0usize;
    let mut best_p = -1.0f64;
    for (idx, &p) in pmf.probs.iter().enumerate() {
        acc += p;
        cum.push(acc);
        if p > best_p {
            best_p = p;
            best_cell = idx;
        }
    }
    let total = acc;
    let mut out = Vec::with_capacity(count);
    let mut tail_draws = 0usize;
    for _ in 0..count {
        let u: f64 = rng.gen::<f64>();
        let cell = if u >= total {
            tail_draws += 1;
            best_cell
        } else {
            cum.partition_point(|&c| c <= u)
        };
        out.push(((cell / side) as u16, (cell % side) as u16));
    }
    (out, tail_draws)
}

/// Refinement likelihood evaluator. The receiver (`omega`, `gamma_hat`) and
/// the channel's true phase are fixed; only the model transmittance inside
/// the state varies. Tables are memoized on theta quantized to 1e-9, since
/// golden-section revisits nearby points.
pub struct RefineModel {
    channel: ChannelParams,
    retained_max: usize,
    internal_max: usize,
    /// `U(gamma_hat - gamma_t) S(omega)` on the internal space.
    right: BlockDiagOp,
    memo: BTreeMap<i64, Array2<f64>>,
    pub evals: usize,
}

impl RefineModel {
    pub fn new(config: &ReceiverConfig, channel: &ChannelParams, theta_lo: f64) -> Result<Self> {
        let retained_max = config.cutoff.per_mode_max;
        // Fix one internal workspace for the whole theta range.
        let mut internal_max = 0usize;
        for theta in [theta_lo, 0.5 * (theta_lo + 1.0), 1.0] {
            let form = williamson_two_mode(&output_covariance(&channel.with_theta(theta)))?;
            internal_max = internal_max.max(crate::gaussian::internal_cutoff(retained_max, &form)?);
        }
        let delta = config.gamma_hat - channel.gamma;
        let mut right = tms_blocks(config.omega, internal_max);
        right.scale_rows_phase(delta);
        Ok(Self {
            channel: *channel,
            retained_max,
            internal_max,
            right,
            memo: BTreeMap::new(),
            evals: 0,
        })
    }

    fn quantize(theta: f64) -> i64 {
        (theta * 1e9).round() as i64
    }

    /// Retained outcome probabilities of the model at `theta`.
    pub fn probs(&mut self, theta: f64) -> Result<&Array2<f64>> {
        let key = Self::quantize(theta);
        if !self.memo.contains_key(&key) {
            let table = self.fresh_probs(theta)?;
            self.memo.insert(key, table);
            self.evals += 1;
        }
        Ok(self.memo.get(&key).expect("just inserted"))
    }

    /// Probabilities computed without the memo (pure-function contract).
    pub fn fresh_probs(&self, theta: f64) -> Result<Array2<f64>> {
        let form = williamson_two_mode(&output_covariance(&self.channel.with_theta(theta)))?;
        let zeta = SqueezeParams::new(form.zeta)?;
        let a = tms_blocks(zeta, self.internal_max).matmul(&self.right);
        let n = self.retained_max + 1;
        let mut probs = Array2::<f64>::zeros((n, n));
        for d in a.diffs() {
            let b = &a.blocks[a.block_index(d)];
            for jc in 0..b.ncols() {
                let (k, m) = a.km(d, jc);
                if k >= n || m >= n {
                    continue;
                }
                let mut acc = 0.0f64;
                for jr in 0..b.nrows() {
                    let (s, t) = a.km(d, jr);
                    let w = r_weight(s, t, &form);
                    if w > 0.0 {
                        acc += w * b[[jr, jc]].norm_sqr();
                    }
                }
                probs[[k, m]] = acc;
            }
        }
        Ok(probs)
    }

    /// Count-weighted log likelihood at `theta`.
    pub fn loglik(&mut self, theta: f64, counts: &Array2<u64>) -> Result<f64> {
        let probs = self.probs(theta)?;
        let mut acc = 0.0f64;
        for (c, p) in counts.iter().zip(probs.iter()) {
            if *c > 0 {
                acc += (*c as f64) * p.max(1e-300).ln();
            }
        }
        Ok(acc)
    }
}

/// Result of the refinement maximization.
#[derive(Debug, Clone, Copy)]
pub struct RefineOutcome {
    pub theta_r: f64,
    pub loglik: f64,
    pub boundary_max: bool,
    pub evals: usize,
}

/// Histogram of PNR outcome pairs on the retained grid.
pub fn count_histogram(data: &[(u16, u16)], per_mode_max: usize) -> Array2<u64> {
    let n = per_mode_max + 1;
    let mut counts = Array2::<u64>::zeros((n, n));
    for &(k, m) in data {
        counts[[k as usize, m as usize]] += 1;
    }
    counts
}

/// Maximize the refinement log likelihood over `theta` in
/// `[theta_lo, 1]`: a 33-point grid seed followed by golden-section
/// refinement to 1e-7. The receiver stays fixed; only the model state moves.
pub fn refine_mle(
    data: &[(u16, u16)],
    config: &ReceiverConfig,
    channel_template: &ChannelParams,
    theta_lo: f64,
) -> Result<RefineOutcome> {
    if data.is_empty() {
        return Err(QlossError::EmptySamples);
    }
    let counts = count_histogram(data, config.cutoff.per_mode_max);
    refine_mle_counts(&counts, config, channel_template, theta_lo)
}

pub fn refine_mle_counts(
    counts: &Array2<u64>,
    config: &ReceiverConfig,
    channel_template: &ChannelParams,
    theta_lo: f64,
) -> Result<RefineOutcome> {
    let mut model = RefineModel::new(config, channel_template, theta_lo)?;
    let mut failure: Option<QlossError> = None;
    let result = {
        let objective = |theta: f64| -> f64 {
            match model.loglik(theta, counts) {
                Ok(v) => v,
                Err(e) => {
                    if failure.is_none() {
                        failure = Some(e);
                    }
                    f64::NEG_INFINITY
                }
            }
        };
        optimize::grid_then_golden_max(objective, theta_lo, 1.0, 33, 1e-7, 1e-6)
    };
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(RefineOutcome {
        theta_r: result.x,
        loglik: result.fx,
        boundary_max: result.on_boundary,
        evals: model.evals,
    })
}

/// Tail tolerance for the sampled outcome distribution. A receiver built at
/// a noisy preliminary estimate spreads the outcome distribution beyond what
/// the strict certificate tolerance allows; mass at this level is invisible
/// to desk-scale Monte Carlo (stray draws are reassigned and logged).
pub const SAMPLING_TAIL_TOL: f64 = 1e-4;

/// Execute one full two-stage trial. Deterministic for a fixed seed: the
/// heterodyne and PNR stages draw from independent derived streams.
pub fn run_trial(cfg: &RunConfig) -> Result<TrialRecord> {
    cfg.validate()?;
    let f_n = preliminary_size(cfg.n_total, cfg.schedule_q);
    // One joint batch of 2 f(n) coherent modes covers the transmittance and
    // the nuisance phase (u = 1).
    let prelim_batch = 2 * f_n;
    let n_refine = cfg.n_total - prelim_batch;

    let mut het_rng = rng_from_seed(derive_seed(cfg.seed, 1, 0));
    let samples = sample_heterodyne_rng(&cfg.channel, prelim_batch, &mut het_rng);
    let prelim = mle_preliminary(&samples, cfg.channel.n_s)?;
    let clamped = clamp_to_gamma_space(&prelim, cfg.theta_lo);

    let selection = select_omega(
        clamped.theta_p,
        clamped.gamma_hat,
        &cfg.channel,
        cfg.cutoff,
    )?;
    let receiver = ReceiverConfig {
        omega: selection.omega,
        gamma_hat: clamped.gamma_hat,
        cutoff: FockCutoff {
            per_mode_max: cfg.cutoff.per_mode_max,
            tail_tol: cfg.cutoff.tail_tol.max(SAMPLING_TAIL_TOL),
        },
    };

    // True outcome distribution: state at theta_t with the actual residual
    // phase error gamma_hat - gamma_t.
    let sweep = ReceiverSweep::new(cfg.channel.theta, &cfg.channel, cfg.cutoff.per_mode_max)?;
    let pmf = pmf_from_sweep(&sweep, &receiver)?;
    let mut pnr_rng = rng_from_seed(derive_seed(cfg.seed, 2, 0));
    let (data, tail_draws) = sample_pnr_rng(&pmf, n_refine, &mut pnr_rng);

    let refined = refine_mle(&data, &receiver, &cfg.channel, cfg.theta_lo)?;

    Ok(TrialRecord {
        seed: cfg.seed,
        n_total: cfg.n_total,
        f_n,
        n_refine,
        theta_true: cfg.channel.theta,
        gamma_true: cfg.channel.gamma,
        theta_p_raw: prelim.theta_p,
        theta_p: clamped.theta_p,
        gamma_hat: clamped.gamma_hat,
        prelim_degenerate: prelim.degenerate,
        omega: selection.omega.r,
        cfi_ratio: selection.ratio,
        omega_certified: selection.certified,
        theta_r: refined.theta_r,
        loglik_at_max: refined.loglik,
        boundary_max: refined.boundary_max,
        pmf_tail_mass: pmf.tail_mass,
        tail_draws,
        omega_evals: selection.evals,
        refine_evals: refined.evals,
    })
}
