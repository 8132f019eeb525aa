//! Preliminary stage: coherent-state probe, heterodyne outcome model, and
//! the closed-form joint estimates of the transmittance and the nuisance
//! phase.
//!
//! Each probe mode carries amplitude `sqrt(n_s)` (real, zero phase); the
//! heterodyne outcome of one returned mode is a pair of Gaussians with mean
//! `sqrt(theta n_s) (cos gamma, sin gamma)` and per-component variance
//! `n_b + 1/2`.

use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{QlossError, Result};
use crate::gaussian::ChannelParams;
use crate::twostage::rng_from_seed;

/// One heterodyne outcome pair.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HeterodyneSample {
    pub a: f64,
    pub b: f64,
}

/// Joint preliminary estimate of `(theta, gamma)` from one coherent batch.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PreliminaryEstimate {
    /// Raw closed-form estimate, nonnegative but possibly above 1.
    pub theta_p: f64,
    /// Phase estimate in (-pi, pi].
    pub gamma_hat: f64,
    /// Number of samples used.
    pub n_used: usize,
    /// Both quadrature means vanished; `gamma_hat` was set to 0.
    pub degenerate: bool,
}

/// Draw `count` i.i.d. heterodyne pairs for the true channel.
pub fn sample_heterodyne(p: &ChannelParams, count: usize, seed: u64) -> Vec<HeterodyneSample> {
    let mut rng = rng_from_seed(seed);
    sample_heterodyne_rng(p, count, &mut rng)
}

pub fn sample_heterodyne_rng(
    p: &ChannelParams,
    count: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<HeterodyneSample> {
    let amp = (p.theta * p.n_s).sqrt();
    let mean_a = amp * p.gamma.cos();
    let mean_b = amp * p.gamma.sin();
    let sd = (p.n_b + 0.5).sqrt();
    let norm = Normal::new(0.0, sd).expect("positive standard deviation");
    (0..count)
        .map(|_| HeterodyneSample {
            a: mean_a + norm.sample(rng),
            b: mean_b + norm.sample(rng),
        })
        .collect()
}

/// Closed-form joint maximum-likelihood estimates:
/// `theta = Abar^2 + Bbar^2`, `gamma = atan2(Bbar, Abar)` with
/// `Abar = sum a_i / (n sqrt(n_s))`.
pub fn mle_preliminary(samples: &[HeterodyneSample], n_s: f64) -> Result<PreliminaryEstimate> {
    if samples.is_empty() {
        return Err(QlossError::EmptySamples);
    }
    if !(n_s > 0.0) {
        return Err(QlossError::InvalidConfig(
            "preliminary MLE needs a nonzero probe amplitude".into(),
        ));
    }
    let n = samples.len() as f64;
    let scale = 1.0 / (n * n_s.sqrt());
    let a_bar: f64 = samples.iter().map(|s| s.a).sum::<f64>() * scale;
    let b_bar: f64 = samples.iter().map(|s| s.b).sum::<f64>() * scale;
    let theta_p = a_bar * a_bar + b_bar * b_bar;
    let degenerate = a_bar == 0.0 && b_bar == 0.0;
    let gamma_hat = if degenerate { 0.0 } else { b_bar.atan2(a_bar) };
    Ok(PreliminaryEstimate {
        theta_p,
        gamma_hat,
        n_used: samples.len(),
        degenerate,
    })
}

/// Clamp the raw transmittance estimate into the refinement parameter space
/// `[theta_lo, 1]`.
pub fn clamp_to_gamma_space(e: &PreliminaryEstimate, theta_lo: f64) -> PreliminaryEstimate {
    PreliminaryEstimate {
        theta_p: e.theta_p.clamp(theta_lo, 1.0),
        ..*e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mle_closed_form_examples() {
        let ones: Vec<HeterodyneSample> = (0..5)
            .map(|_| HeterodyneSample { a: 1.0, b: 0.0 })
            .collect();
        let e = mle_preliminary(&ones, 1.0).unwrap();
        assert_abs_diff_eq!(e.theta_p, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.gamma_hat, 0.0, epsilon = 1e-15);

        let up: Vec<HeterodyneSample> = (0..3)
            .map(|_| HeterodyneSample { a: 0.0, b: 2.0 })
            .collect();
        let e = mle_preliminary(&up, 4.0).unwrap();
        assert_abs_diff_eq!(e.theta_p, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.gamma_hat, std::f64::consts::FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_batch_flags() {
        let zeros = vec![HeterodyneSample { a: 0.0, b: 0.0 }; 4];
        let e = mle_preliminary(&zeros, 1.0).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.gamma_hat, 0.0);
    }

    #[test]
    fn empty_batch_is_an_error() {
        assert!(matches!(
            mle_preliminary(&[], 1.0),
            Err(QlossError::EmptySamples)
        ));
    }

    #[test]
    fn sample_moments_match_model() {
        let p = ChannelParams::new(0.8, 0.6, 0.5, 0.4).unwrap();
        let samples = sample_heterodyne(&p, 1_000_000, 17);
        let n = samples.len() as f64;
        let ma: f64 = samples.iter().map(|s| s.a).sum::<f64>() / n;
        let mb: f64 = samples.iter().map(|s| s.b).sum::<f64>() / n;
        let amp = (0.8f64 * 0.5).sqrt();
        let sd = (0.4f64 + 0.5).sqrt();
        let tol = 4.0 * sd / n.sqrt();
        assert!((ma - amp * 0.6f64.cos()).abs() < tol);
        assert!((mb - amp * 0.6f64.sin()).abs() < tol);
        let va: f64 = samples.iter().map(|s| (s.a - ma) * (s.a - ma)).sum::<f64>() / n;
        assert!((va / (0.4 + 0.5) - 1.0).abs() < 0.01);
    }

    #[test]
    fn zero_transmittance_gives_zero_mean_noise() {
        let p = ChannelParams::new(1e-12, 0.0, 0.5, 0.4).unwrap();
        let samples = sample_heterodyne(&p, 100_000, 3);
        let n = samples.len() as f64;
        let ma: f64 = samples.iter().map(|s| s.a).sum::<f64>() / n;
        assert!(ma.abs() < 4.0 * (0.9f64).sqrt() / n.sqrt());
    }

    #[test]
    fn clamp_examples() {
        let e = PreliminaryEstimate {
            theta_p: 1.3,
            gamma_hat: 0.2,
            n_used: 10,
            degenerate: false,
        };
        assert_abs_diff_eq!(clamp_to_gamma_space(&e, 0.5).theta_p, 1.0);
        let low = PreliminaryEstimate {
            theta_p: 0.25,
            ..e
        };
        assert_abs_diff_eq!(clamp_to_gamma_space(&low, 0.5).theta_p, 0.5);
        let mid = PreliminaryEstimate {
            theta_p: 0.75,
            ..e
        };
        assert_abs_diff_eq!(clamp_to_gamma_space(&mid, 0.5).theta_p, 0.75);
    }

    #[test]
    fn consistency_rate_in_batch_size() {
        // RMS error of theta_p should scale like c / sqrt(f) within a factor
        // of two across two decades.
        let p = ChannelParams::new(0.8, 0.6, 0.5, 0.4).unwrap();
        let mut rms = Vec::new();
        for (fi, f) in [100usize, 1000, 10000].into_iter().enumerate() {
            let mut sq = 0.0;
            let trials = 300;
            for t in 0..trials {
                let seed = 1000 + (fi * trials + t) as u64;
                let s = sample_heterodyne(&p, f, seed);
                let e = mle_preliminary(&s, 0.5).unwrap();
                sq += (e.theta_p - 0.8) * (e.theta_p - 0.8);
            }
            rms.push((sq / trials as f64).sqrt());
        }
        for w in rms.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                ratio > 10.0f64.sqrt() / 2.0 && ratio < 2.0 * 10.0f64.sqrt(),
                "rms ratio {ratio} outside the sqrt-rate band; rms = {rms:?}"
            );
        }
    }
}
