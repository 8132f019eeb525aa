//! Statistical verification harness: consistency sweeps, asymptotic
//! normality against the quantum bound, MSE trend curves, and the Fisher
//! information landscape over receiver settings.
//!
//! All statistics are pure functions of [`TrialRecord`] lists, so reports
//! can be recomputed bitwise from stored archives without re-simulating.

use ndarray::Array2;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{QlossError, Result};
use crate::fock::{FockCutoff, SqueezeParams};
use crate::gaussian::ChannelParams;
use crate::receiver::ReceiverSweep;
use crate::twostage::{derive_seed, run_trial, RunConfig, TrialRecord};

/// Which harness statistics a sweep should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MetricSet {
    pub consistency: bool,
    pub normality: bool,
    pub mse: bool,
}

impl Default for MetricSet {
    fn default() -> Self {
        Self {
            consistency: true,
            normality: true,
            mse: true,
        }
    }
}

/// A sweep over total copy counts with a fixed scenario.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SweepSpec {
    pub n_list: Vec<usize>,
    pub trials_per_n: usize,
    pub base: RunConfig,
    pub metrics: MetricSet,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(QlossError::InvalidConfig(
                "n_list must be nonempty and strictly increasing".into(),
            ));
        }
        if self.trials_per_n < 30 {
            return Err(QlossError::InsufficientTrials {
                context: "sweep",
                needed: 30,
                got: self.trials_per_n,
            });
        }
        let mut probe = self.base;
        for &n in &self.n_list {
            probe.n_total = n;
            probe.validate()?;
        }
        Ok(())
    }
}

/// Records and failures for one total-copy count.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct NTrials {
    pub n_total: usize,
    pub records: Vec<TrialRecord>,
    /// `(trial index, error message)` for trials that could not complete.
    pub failures: Vec<(usize, String)>,
}

/// Run the sweep, data-parallel over `(n, trial)` with a partitioned seed
/// sequence. Results are ordered by trial index, so output is independent
/// of the worker count.
pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<Vec<NTrials>> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| QlossError::InvalidConfig(format!("worker pool: {e}")))?;
    let mut out = Vec::with_capacity(spec.n_list.len());
    for (n_idx, &n_total) in spec.n_list.iter().enumerate() {
        let base = spec.base;
        let results: Vec<(usize, std::result::Result<TrialRecord, String>)> = pool.install(|| {
            (0..spec.trials_per_n)
                .into_par_iter()
                .map(|trial| {
                    let mut cfg = base;
                    cfg.n_total = n_total;
                    cfg.seed = derive_seed(base.seed, n_idx as u64 + 1, trial as u64);
                    let res = run_trial(&cfg).map_err(|e| e.to_string());
                    (trial, res)
                })
                .collect()
        });
        let mut records = Vec::with_capacity(spec.trials_per_n);
        let mut failures = Vec::new();
        for (trial, res) in results {
            match res {
                Ok(r) => records.push(r),
                Err(msg) => failures.push((trial, msg)),
            }
        }
        out.push(NTrials {
            n_total,
            records,
            failures,
        });
    }
    Ok(out)
}

/// One row of the consistency table.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ConsistencyRow {
    pub n_total: usize,
    pub f_n: usize,
    pub trials: usize,
    pub failures: usize,
    pub rms_refine: f64,
    pub rms_prelim: f64,
    /// Trials whose refinement argmax hit the parameter-space edge
    /// (included here, excluded from normality).
    pub boundary_count: usize,
}

/// RMS errors per copy count plus the Spearman rank correlation of the
/// refinement RMS against n (negative = improving with n).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ConsistencyTable {
    pub rows: Vec<ConsistencyRow>,
    pub spearman_rms_vs_n: f64,
}

pub fn consistency_table(sweep: &[NTrials]) -> ConsistencyTable {
    let rows: Vec<ConsistencyRow> = sweep
        .iter()
        .map(|nt| {
            let trials = nt.records.len();
            let mut sq_r = 0.0f64;
            let mut sq_p = 0.0f64;
            let mut boundary = 0usize;
            for r in &nt.records {
                sq_r += (r.theta_r - r.theta_true) * (r.theta_r - r.theta_true);
                sq_p += (r.theta_p - r.theta_true) * (r.theta_p - r.theta_true);
                if r.boundary_max {
                    boundary += 1;
                }
            }
            let denom = trials.max(1) as f64;
            ConsistencyRow {
                n_total: nt.n_total,
                f_n: nt.records.first().map(|r| r.f_n).unwrap_or(0),
                trials,
                failures: nt.failures.len(),
                rms_refine: (sq_r / denom).sqrt(),
                rms_prelim: (sq_p / denom).sqrt(),
                boundary_count: boundary,
            }
        })
        .collect();
    let ns: Vec<f64> = rows.iter().map(|r| r.n_total as f64).collect();
    let rms: Vec<f64> = rows.iter().map(|r| r.rms_refine).collect();
    ConsistencyTable {
        spearman_rms_vs_n: spearman(&ns, &rms),
        rows,
    }
}

/// Normality report for a single copy count.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct NormalityReport {
    pub n_total: usize,
    /// `sqrt(n') (theta_r - theta_t)` over non-boundary trials.
    pub z_samples: Vec<f64>,
    pub ks_stat: f64,
    /// Target limiting variance, `1 / J`.
    pub target_var: f64,
    /// `n' Var(theta_r) / J^{-1}`.
    pub var_ratio: f64,
    pub mean_z: f64,
    pub excluded_boundary: usize,
}

/// One-sample Kolmogorov-Smirnov statistic of the scaled refinement errors
/// against the `N(0, 1/J)` limit.
pub fn normality_test(nt: &NTrials, qfi: f64) -> Result<NormalityReport> {
    let usable: Vec<&TrialRecord> = nt.records.iter().filter(|r| !r.boundary_max).collect();
    if usable.len() < 500 {
        return Err(QlossError::InsufficientTrials {
            context: "KS normality test",
            needed: 500,
            got: usable.len(),
        });
    }
    let mut z: Vec<f64> = usable
        .iter()
        .map(|r| (r.n_refine as f64).sqrt() * (r.theta_r - r.theta_true))
        .collect();
    z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sd = (1.0 / qfi).sqrt();
    let normal = Normal::new(0.0, sd).expect("positive target variance");
    let n = z.len() as f64;
    let mut ks = 0.0f64;
    for (i, &zi) in z.iter().enumerate() {
        let cdf = normal.cdf(zi);
        let hi = ((i + 1) as f64 / n - cdf).abs();
        let lo = (cdf - i as f64 / n).abs();
        ks = ks.max(hi).max(lo);
    }
    let mean_z = z.iter().sum::<f64>() / n;
    let var_z = z.iter().map(|x| (x - mean_z) * (x - mean_z)).sum::<f64>() / (n - 1.0);
    Ok(NormalityReport {
        n_total: nt.n_total,
        ks_stat: ks,
        target_var: 1.0 / qfi,
        var_ratio: var_z * qfi,
        mean_z,
        excluded_boundary: nt.records.len() - usable.len(),
        z_samples: z,
    })
}

/// One row of the `n * MSE` trend against the quantum bound.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct MseRow {
    pub n_total: usize,
    pub n_mse: f64,
    pub qcrb_inv: f64,
}

/// Empirical `n * MSE` (all trials, boundary ones included) next to the
/// constant `1 / J` line.
pub fn mse_vs_qcrb_curve(sweep: &[NTrials], qfi: f64) -> Vec<MseRow> {
    sweep
        .iter()
        .map(|nt| {
            let trials = nt.records.len().max(1) as f64;
            let mse = nt
                .records
                .iter()
                .map(|r| (r.theta_r - r.theta_true) * (r.theta_r - r.theta_true))
                .sum::<f64>()
                / trials;
            MseRow {
                n_total: nt.n_total,
                n_mse: nt.n_total as f64 * mse,
                qcrb_inv: 1.0 / qfi,
            }
        })
        .collect()
}

/// Classical Fisher information of the true state at `theta_t` for the
/// harness targets, via the exact Lindblad derivative and the SLD.
pub fn qfi_at_truth(channel: &ChannelParams, cutoff: FockCutoff) -> Result<f64> {
    let sweep = ReceiverSweep::new(channel.theta, channel, cutoff.per_mode_max)?;
    Ok(sweep.qfi())
}

/// CFI surface over receiver squeeze and phase-correction error.
#[derive(Debug, Clone)]
pub struct FiLandscape {
    pub omega_grid: Vec<f64>,
    pub gamma_err_grid: Vec<f64>,
    /// `cfi[[i, j]]` at `omega_grid[i]`, `gamma_err_grid[j]`.
    pub cfi: Array2<f64>,
    pub qfi: f64,
    pub max_cfi: f64,
    pub argmax: (usize, usize),
    /// Largest CFI / QFI anywhere on the grid.
    pub max_ratio: f64,
}

pub fn fi_landscape(
    channel: &ChannelParams,
    omega_grid: &[f64],
    gamma_err_grid: &[f64],
    cutoff: FockCutoff,
) -> Result<FiLandscape> {
    if omega_grid.is_empty() || gamma_err_grid.is_empty() {
        return Err(QlossError::InvalidConfig("empty landscape grid".into()));
    }
    let sweep = ReceiverSweep::new(channel.theta, channel, cutoff.per_mode_max)?;
    let qfi = sweep.qfi();
    let mut cfi = Array2::<f64>::zeros((omega_grid.len(), gamma_err_grid.len()));
    let cells: Vec<(usize, usize)> = (0..omega_grid.len())
        .flat_map(|i| (0..gamma_err_grid.len()).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let omega = SqueezeParams::new(omega_grid[i]).expect("finite grid point");
            sweep.cfi(omega, channel.gamma + gamma_err_grid[j])
        })
        .collect();
    for (&(i, j), v) in cells.iter().zip(values) {
        cfi[[i, j]] = v;
    }
    let mut max_cfi = f64::NEG_INFINITY;
    let mut argmax = (0, 0);
    for i in 0..omega_grid.len() {
        for j in 0..gamma_err_grid.len() {
            if cfi[[i, j]] > max_cfi {
                max_cfi = cfi[[i, j]];
                argmax = (i, j);
            }
        }
    }
    Ok(FiLandscape {
        omega_grid: omega_grid.to_vec(),
        gamma_err_grid: gamma_err_grid.to_vec(),
        cfi,
        qfi,
        max_cfi,
        argmax,
        max_ratio: max_cfi / qfi,
    })
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let mx = rx.iter().sum::<f64>() / n as f64;
    let my = ry.iter().sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..n {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    if dx == 0.0 || dy == 0.0 {
        0.0
    } else {
        num / (dx * dy).sqrt()
    }
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}
