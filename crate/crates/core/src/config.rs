//! Experiment configuration: a human-editable TOML document that mirrors
//! the run and sweep settings. Unknown keys are rejected and the document
//! round-trips losslessly through parse/serialize.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{QlossError, Result};
use crate::fock::FockCutoff;
use crate::gaussian::ChannelParams;
use crate::harness::{MetricSet, SweepSpec};
use crate::twostage::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub theta: f64,
    pub gamma: f64,
    pub n_s: f64,
    pub n_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffSection {
    pub per_mode_max: usize,
    pub tail_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_list: Vec<usize>,
    pub trials_per_n: usize,
    pub schedule_q: f64,
    pub theta_lo: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiMapSection {
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_points: usize,
    pub gamma_err_max: f64,
    pub gamma_err_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub out_dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub channel: ChannelSection,
    pub cutoff: CutoffSection,
    pub run: RunSection,
    #[serde(default = "default_metrics")]
    pub metrics: MetricSet,
    pub fi_map: FiMapSection,
    pub output: OutputSection,
}

fn default_metrics() -> MetricSet {
    MetricSet::default()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| QlossError::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialized form, hex-encoded.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn channel_params(&self) -> Result<ChannelParams> {
        ChannelParams::new(
            self.channel.theta,
            self.channel.gamma,
            self.channel.n_s,
            self.channel.n_b,
        )
    }

    pub fn fock_cutoff(&self) -> Result<FockCutoff> {
        FockCutoff::new(self.cutoff.per_mode_max, self.cutoff.tail_tol)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let base = RunConfig {
            channel: self.channel_params()?,
            n_total: *self.run.n_list.last().unwrap_or(&0),
            schedule_q: self.run.schedule_q,
            cutoff: self.fock_cutoff()?,
            seed: self.seed,
            theta_lo: self.run.theta_lo,
        };
        let spec = SweepSpec {
            n_list: self.run.n_list.clone(),
            trials_per_n: self.run.trials_per_n,
            base,
            metrics: self.metrics,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn omega_grid(&self) -> Vec<f64> {
        linspace(
            self.fi_map.omega_min,
            self.fi_map.omega_max,
            self.fi_map.omega_points,
        )
    }

    pub fn gamma_err_grid(&self) -> Vec<f64> {
        linspace(
            -self.fi_map.gamma_err_max,
            self.fi_map.gamma_err_max,
            self.fi_map.gamma_err_points,
        )
    }
}

pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

/// The scenario used by the validation suite and the bundled example
/// configuration.
pub fn fixture_config() -> ExperimentConfig {
    ExperimentConfig {
        seed: 20260811,
        channel: ChannelSection {
            theta: 0.9,
            gamma: 0.7,
            n_s: 0.3,
            n_b: 0.4,
        },
        cutoff: CutoffSection {
            per_mode_max: 25,
            tail_tol: 1e-8,
        },
        run: RunSection {
            n_list: vec![250, 1000, 4000],
            trials_per_n: 500,
            schedule_q: 0.5,
            theta_lo: 0.5,
        },
        metrics: MetricSet::default(),
        fi_map: FiMapSection {
            omega_min: -2.0,
            omega_max: 2.0,
            omega_points: 41,
            gamma_err_max: 1.0,
            gamma_err_points: 21,
        },
        output: OutputSection {
            out_dir: "runs/fixture".into(),
        },
    }
}
