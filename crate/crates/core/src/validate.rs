//! Fast invariant suite behind `qloss validate`: operator unitarity, p.m.f.
//! normalization and dual-route agreement, Gaussian moment identities, the
//! Lindblad-vs-finite-difference derivative, the closed-form lower bound,
//! and receiver optimality at the fixture scenario.

use num_complex::Complex64 as C64;

use crate::config::fixture_config;
use crate::fock::{tms_blocks, FockCutoff, SqueezeParams};
use crate::gaussian::{
    output_covariance, r_weight, returned_mode_moments, williamson_two_mode, ChannelParams,
    SqueezedThermalForm,
};
use crate::receiver::{
    pmf_explicit_sums_impl, pmf_lower_bound_check, pmf_tms_pnr, pmf_theta_derivative,
    select_omega, ReceiverConfig,
};

/// Options for the invariant suite.
#[derive(Debug, Clone, Copy)]
pub struct ValidateOptions {
    pub cutoff: FockCutoff,
    /// Mutation probe: flip the receiver squeezer sign in route A only. A
    /// healthy build must then FAIL the route-agreement check.
    pub inject_squeezer_sign_flip: bool,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            cutoff: FockCutoff {
                per_mode_max: 25,
                tail_tol: 1e-8,
            },
            inject_squeezer_sign_flip: false,
        }
    }
}

pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn fixture_channel() -> ChannelParams {
    let f = fixture_config();
    ChannelParams::new(f.channel.theta, f.channel.gamma, f.channel.n_s, f.channel.n_b)
        .expect("fixture channel is valid")
}

fn check<F: FnOnce() -> Result<String, String>>(name: &'static str, f: F) -> CheckOutcome {
    match f() {
        Ok(detail) => CheckOutcome {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckOutcome {
            name,
            passed: false,
            detail,
        },
    }
}

/// Run every invariant check; the caller decides how to render them.
pub fn run_all(opts: &ValidateOptions) -> Vec<CheckOutcome> {
    let mut out = Vec::new();

    out.push(check("squeezer_unitarity", || {
        let r = SqueezeParams::new(0.3).map_err(|e| e.to_string())?;
        let blocks = tms_blocks(r, 32);
        let deficit = blocks.certified_column_deficit(16);
        if deficit < 1e-8 {
            Ok(format!("column deficit {deficit:.2e} on the inner block"))
        } else {
            Err(format!("column deficit {deficit:.2e} exceeds 1e-8"))
        }
    }));

    out.push(check("squeezer_composition", || {
        let f = tms_blocks(SqueezeParams::new(0.35).unwrap(), 32);
        let b = tms_blocks(SqueezeParams::new(-0.35).unwrap(), 32);
        let prod = f.matmul(&b);
        let mut worst = 0.0f64;
        for d in prod.diffs() {
            let blk = &prod.blocks[prod.block_index(d)];
            for jr in 0..blk.nrows() {
                let (k, m) = prod.km(d, jr);
                if k > 8 || m > 8 {
                    continue;
                }
                for jc in 0..blk.ncols() {
                    let (k2, m2) = prod.km(d, jc);
                    if k2 > 8 || m2 > 8 {
                        continue;
                    }
                    let want = if jr == jc { 1.0 } else { 0.0 };
                    worst = worst.max((blk[[jr, jc]] - C64::new(want, 0.0)).norm());
                }
            }
        }
        if worst < 1e-8 {
            Ok(format!("S(r) S(-r) deviates from identity by {worst:.2e}"))
        } else {
            Err(format!("S(r) S(-r) deviation {worst:.2e} exceeds 1e-8"))
        }
    }));

    out.push(check("vacuum_amplitude", || {
        let mut worst = 0.0f64;
        for r in [0.1, 0.5, 1.0] {
            let blocks = tms_blocks(SqueezeParams::new(r).unwrap(), 24);
            let b0 = &blocks.blocks[blocks.block_index(0)];
            worst = worst.max((b0[[0, 0]].re - 1.0 / r.cosh()).abs());
        }
        if worst < 1e-12 {
            Ok(format!("<0,0|S(r)|0,0> matches sech r within {worst:.2e}"))
        } else {
            Err(format!("vacuum amplitude deviates by {worst:.2e}"))
        }
    }));

    out.push(check("williamson_roundtrip", || {
        let mut worst = 0.0f64;
        for theta in [0.4, 0.7, 0.9, 1.0] {
            for n_s in [0.1, 0.3, 0.8] {
                for n_b in [0.1, 0.4, 1.0] {
                    let p = ChannelParams::new(theta, 0.7, n_s, n_b).map_err(|e| e.to_string())?;
                    let g = output_covariance(&p);
                    let f = williamson_two_mode(&g).map_err(|e| e.to_string())?;
                    let recon = f.reconstruct_covariance();
                    let res = (&recon - &g.cov)
                        .iter()
                        .map(|x| x.abs())
                        .fold(0.0f64, f64::max);
                    worst = worst.max(res);
                }
            }
        }
        if worst < 1e-9 {
            Ok(format!("normal-form reconstruction residual {worst:.2e}"))
        } else {
            Err(format!("reconstruction residual {worst:.2e} exceeds 1e-9"))
        }
    }));

    out.push(check("thermal_weight_normalization", || {
        let form = SqueezedThermalForm {
            zeta: 0.0,
            n1: 1.5,
            n2: 0.7,
            gamma: 0.0,
        };
        let mut total = 0.0;
        for s in 0..=300 {
            for t in 0..=300 {
                total += r_weight(s, t, &form);
            }
        }
        let dev = (total - 1.0).abs();
        if dev < 1e-10 {
            Ok(format!("sum r_st deviates from 1 by {dev:.2e}"))
        } else {
            Err(format!("sum r_st deviates from 1 by {dev:.2e}"))
        }
    }));

    let channel = fixture_channel();
    let cutoff = opts.cutoff;

    out.push(check("moment_identities", || {
        let form = williamson_two_mode(&output_covariance(&channel)).map_err(|e| e.to_string())?;
        let (closed, numeric) = returned_mode_moments(&form, cutoff).map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        for (c, n) in closed.iter().zip(&numeric) {
            worst = worst.max((c - n).abs() / c.abs().max(1.0));
        }
        if worst < 1e-6 {
            Ok(format!("six trace identities agree within {worst:.2e}"))
        } else {
            Err(format!("trace identity deviation {worst:.2e} exceeds 1e-6"))
        }
    }));

    // Receiver at the optimum of the fixture scenario.
    let selection = select_omega(channel.theta, channel.gamma, &channel, cutoff);
    let receiver = match &selection {
        Ok(sel) => Some(ReceiverConfig {
            omega: sel.omega,
            gamma_hat: channel.gamma,
            cutoff,
        }),
        Err(_) => None,
    };

    out.push(check("cfi_attains_qfi", || {
        let sel = selection.as_ref().map_err(|e| e.to_string())?;
        if sel.ratio >= 0.99 && sel.ratio <= 1.0001 {
            Ok(format!(
                "CFI/QFI = {:.6} at omega = {:.4}",
                sel.ratio, sel.omega.r
            ))
        } else {
            Err(format!("CFI/QFI = {:.6} outside [0.99, 1.0001]", sel.ratio))
        }
    }));

    out.push(check("pmf_normalization", || {
        let cfg = receiver.ok_or("receiver construction failed".to_string())?;
        let table = pmf_tms_pnr(channel.theta, &cfg, &channel).map_err(|e| e.to_string())?;
        Ok(format!("tail mass {:.2e}", table.tail_mass))
    }));

    out.push(check("pmf_route_agreement", || {
        let cfg = receiver.ok_or("receiver construction failed".to_string())?;
        let b = pmf_tms_pnr(channel.theta, &cfg, &channel).map_err(|e| e.to_string())?;
        let a = pmf_explicit_sums_impl(
            channel.theta,
            &cfg,
            &channel,
            opts.inject_squeezer_sign_flip,
        )
        .map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        for (x, y) in a.probs.iter().zip(b.probs.iter()) {
            worst = worst.max((x - y).abs());
        }
        if worst < 1e-8 {
            Ok(format!("explicit sums vs operator sandwich within {worst:.2e}"))
        } else {
            Err(format!("route disagreement {worst:.2e} exceeds 1e-8"))
        }
    }));

    out.push(check("lindblad_vs_finite_difference", || {
        let cfg = receiver.ok_or("receiver construction failed".to_string())?;
        let theta = channel.theta;
        let dp = pmf_theta_derivative(theta, &cfg, &channel).map_err(|e| e.to_string())?;
        let h = 1e-5 * theta;
        let plus = pmf_tms_pnr(theta + h, &cfg, &channel).map_err(|e| e.to_string())?;
        let minus = pmf_tms_pnr(theta - h, &cfg, &channel).map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        for k in 0..dp.nrows() {
            for m in 0..dp.ncols() {
                if plus.prob(k, m).max(minus.prob(k, m)) < 1e-10 {
                    continue;
                }
                let fd = (plus.prob(k, m) - minus.prob(k, m)) / (2.0 * h);
                worst = worst.max((dp[[k, m]] - fd).abs() / fd.abs().max(1e-12));
            }
        }
        let total: f64 = dp.sum();
        if worst < 1e-4 && total.abs() < 1e-8 {
            Ok(format!(
                "relative deviation {worst:.2e}, sum d_theta p = {total:.2e}"
            ))
        } else {
            Err(format!(
                "relative deviation {worst:.2e} (bar 1e-4), sum d_theta p = {total:.2e} (bar 1e-8)"
            ))
        }
    }));

    out.push(check("pmf_lower_bound", || {
        let cfg = receiver.ok_or("receiver construction failed".to_string())?;
        let form = williamson_two_mode(&output_covariance(&channel)).map_err(|e| e.to_string())?;
        let mut detail = String::new();
        for gamma_err in [0.0, 0.5] {
            let shifted = ReceiverConfig {
                gamma_hat: channel.gamma + gamma_err,
                ..cfg
            };
            let pmf =
                pmf_tms_pnr(channel.theta, &shifted, &channel).map_err(|e| e.to_string())?;
            let rep = pmf_lower_bound_check(&pmf, &form, &shifted).map_err(|e| e.to_string())?;
            if !rep.ok {
                return Err(format!(
                    "violation at {:?} with phase error {gamma_err}",
                    rep.violating_cell
                ));
            }
            detail = format!("l2 = {:.4}, l3 = {:.4} at phase error {gamma_err}", rep.l2, rep.l3);
        }
        Ok(detail)
    }));

    out.push(check("qcrb_ordering_on_grid", || {
        let omegas: Vec<f64> = (0..9).map(|i| -1.2 + 0.15 * i as f64).collect();
        let gammas: Vec<f64> = (-2..=2).map(|i| 0.25 * i as f64).collect();
        let land = crate::harness::fi_landscape(&channel, &omegas, &gammas, cutoff)
            .map_err(|e| e.to_string())?;
        if land.max_ratio <= 1.0 + 1e-3 {
            Ok(format!("max CFI/QFI on grid = {:.6}", land.max_ratio))
        } else {
            Err(format!(
                "CFI exceeds QFI: max ratio {:.6} > 1 + 1e-3",
                land.max_ratio
            ))
        }
    }));

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_defaults() {
        let opts = ValidateOptions {
            cutoff: FockCutoff::new(20, 1e-6).unwrap(),
            inject_squeezer_sign_flip: false,
        };
        let results = run_all(&opts);
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }

    #[test]
    fn sign_flip_injection_is_caught() {
        let opts = ValidateOptions {
            cutoff: FockCutoff::new(18, 1e-6).unwrap(),
            inject_squeezer_sign_flip: true,
        };
        let results = run_all(&opts);
        let agreement = results
            .iter()
            .find(|r| r.name == "pmf_route_agreement")
            .unwrap();
        assert!(!agreement.passed, "mutation not caught: {}", agreement.detail);
    }

    #[test]
    fn tiny_cutoff_fails_loudly() {
        let opts = ValidateOptions {
            cutoff: FockCutoff::new(3, 1e-8).unwrap(),
            inject_squeezer_sign_flip: false,
        };
        let results = run_all(&opts);
        assert!(results.iter().any(|r| !r.passed));
    }
}
