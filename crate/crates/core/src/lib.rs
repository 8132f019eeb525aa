//! Two-stage quantum estimation of bosonic-channel power transmittance.
//!
//! A preliminary heterodyne stage on a vanishing fraction of probe modes
//! produces joint estimates of the transmittance and the unknown channel
//! phase; those feed the construction of a two-mode-squeezer +
//! photon-number-resolving receiver whose outcome statistics saturate the
//! quantum Cramér-Rao bound, and a maximum-likelihood refinement runs on
//! the remaining modes. The [`harness`] module checks consistency,
//! asymptotic normality, and bound attainment by Monte Carlo.

pub mod cli;
pub mod config;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod harness;
pub mod heterodyne;
pub mod linalg;
pub mod optimize;
pub mod receiver;
pub mod twostage;
pub mod validate;

pub use error::{QlossError, Result};
