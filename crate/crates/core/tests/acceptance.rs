//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! (run with `--nocapture` to see them on success).
//!
//! The Monte Carlo criteria share one fixture sweep, computed once.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use qloss_core::config::linspace;
use qloss_core::fock::{tms_matrix_elements, FockCutoff, SqueezeParams};
use qloss_core::gaussian::{
    output_covariance, r_weight, returned_mode_moments, williamson_two_mode, ChannelParams,
};
use qloss_core::harness::{
    consistency_table, fi_landscape, mse_vs_qcrb_curve, normality_test, qfi_at_truth, run_sweep,
    MetricSet, NTrials, SweepSpec,
};
use qloss_core::heterodyne::{mle_preliminary, sample_heterodyne};
use qloss_core::receiver::{
    pmf_explicit_sums, pmf_lower_bound_check, pmf_theta_derivative, pmf_tms_pnr, select_omega,
    ReceiverConfig,
};
use qloss_core::twostage::RunConfig;

fn fixture_channel() -> ChannelParams {
    ChannelParams::new(0.9, 0.7, 0.3, 0.4).unwrap()
}

fn fixture_cutoff() -> FockCutoff {
    FockCutoff::new(25, 1e-8).unwrap()
}

fn fixture_base(seed: u64) -> RunConfig {
    RunConfig {
        channel: fixture_channel(),
        n_total: 4000,
        schedule_q: 0.5,
        cutoff: fixture_cutoff(),
        seed,
        theta_lo: 0.5,
    }
}

fn report(criterion: &str, passed: bool, detail: &str, elapsed: f64) {
    let tag = if passed { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {criterion}: {tag} - {detail} ({elapsed:.1} s)");
}

/// Criterion 1: squeezer matrix elements against the matrix-exponential
/// oracle, entrywise <= 1e-8 on the inner half-cutoff block for
/// r in {0.1, 0.3, 0.7} at cutoff 12. Runtime < 10 s.
#[test]
fn criterion_1_operator_correctness() {
    let t0 = Instant::now();
    let inner = 6usize; // half of the per-mode cutoff 12
    let oracle_max = 40usize;
    let mut worst = 0.0f64;
    for r in [0.1, 0.3, 0.7] {
        let params = SqueezeParams::new(r).unwrap();
        // Column certificates do not hold at strong squeeze on a 12-photon
        // grid; element values are exact regardless, which is what the
        // oracle checks.
        let cutoff = FockCutoff::new(12, 0.9).unwrap();
        let s = tms_matrix_elements(params, cutoff).unwrap();
        for d in -(inner as i64)..=inner as i64 {
            let oracle = common::tms_expm_block(r, oracle_max, d);
            for jr in 0..oracle.nrows() {
                for jc in 0..oracle.ncols() {
                    let (ko, mo) = (jr + d.max(0) as usize, jr + (-d).max(0) as usize);
                    let (ki, mi) = (jc + d.max(0) as usize, jc + (-d).max(0) as usize);
                    if ko.max(mo).max(ki).max(mi) > inner {
                        continue;
                    }
                    let got = s.get(ko, mo, ki, mi);
                    let dev = (got.re - oracle[[jr, jc]].re)
                        .abs()
                        .max(got.im.abs())
                        .max(oracle[[jr, jc]].im.abs());
                    worst = worst.max(dev);
                }
            }
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = worst <= 1e-8 && elapsed < 10.0;
    report(
        "1 operator correctness",
        pass,
        &format!("entrywise deviation {worst:.2e} vs matrix-exponential oracle"),
        elapsed,
    );
    assert!(pass, "worst deviation {worst:.3e}, elapsed {elapsed:.1} s");
}

/// Criterion 2: explicit sums vs operator sandwich <= 1e-8 per entry and
/// normalization deficit < 1e-8 at cutoff 25 over a 3x3 (theta, phase
/// error) grid. Runtime < 1 min.
#[test]
fn criterion_2_pmf_dual_route() {
    let t0 = Instant::now();
    let channel = fixture_channel();
    let cutoff = fixture_cutoff();
    let omega = select_omega(0.9, 0.7, &channel, cutoff).unwrap().omega;
    let mut worst_dev = 0.0f64;
    let mut worst_tail = 0.0f64;
    for theta in [0.85, 0.9, 0.95] {
        for gerr in [-0.3, 0.0, 0.3] {
            let config = ReceiverConfig {
                omega,
                gamma_hat: 0.7 + gerr,
                cutoff,
            };
            let b = pmf_tms_pnr(theta, &config, &channel).unwrap();
            let a = pmf_explicit_sums(theta, &config, &channel).unwrap();
            for (x, y) in a.probs.iter().zip(b.probs.iter()) {
                worst_dev = worst_dev.max((x - y).abs());
            }
            worst_tail = worst_tail.max(a.tail_mass).max(b.tail_mass);
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = worst_dev <= 1e-8 && worst_tail < 1e-8 && elapsed < 60.0;
    report(
        "2 p.m.f. dual route",
        pass,
        &format!("route deviation {worst_dev:.2e}, normalization deficit {worst_tail:.2e}"),
        elapsed,
    );
    assert!(pass, "dev {worst_dev:.3e}, tail {worst_tail:.3e}, {elapsed:.1} s");
}

/// Criterion 3: the six returned-mode trace identities, closed form vs Fock
/// numerics, <= 1e-6 relative on the fixture channel. Runtime < 30 s.
#[test]
fn criterion_3_moment_identities() {
    let t0 = Instant::now();
    let channel = fixture_channel();
    let form = williamson_two_mode(&output_covariance(&channel)).unwrap();
    let cutoff = FockCutoff::new(30, 1e-10).unwrap();
    let (closed, numeric) = returned_mode_moments(&form, cutoff).unwrap();
    let mut worst = 0.0f64;
    for (c, n) in closed.iter().zip(&numeric) {
        // Relative where the closed form is nonzero, absolute for the two
        // vanishing moments.
        worst = worst.max((c - n).abs() / c.abs().max(1.0));
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = worst <= 1e-6 && elapsed < 30.0;
    report(
        "3 moment identities",
        pass,
        &format!("six traces agree within {worst:.2e} relative"),
        elapsed,
    );
    assert!(pass, "worst {worst:.3e}, {elapsed:.1} s");
}

/// Criterion 4: Lindblad route vs central finite difference <= 1e-4
/// relative on entries > 1e-10, and the derivative sums to <= 1e-8.
/// Runtime < 1 min.
#[test]
fn criterion_4_lindblad_derivative() {
    let t0 = Instant::now();
    let channel = fixture_channel();
    let cutoff = fixture_cutoff();
    let omega = select_omega(0.9, 0.7, &channel, cutoff).unwrap().omega;
    let config = ReceiverConfig {
        omega,
        gamma_hat: 0.7,
        cutoff,
    };
    let theta = 0.9;
    let dp = pmf_theta_derivative(theta, &config, &channel).unwrap();
    let h = 1e-5 * theta;
    let plus = pmf_tms_pnr(theta + h, &config, &channel).unwrap();
    let minus = pmf_tms_pnr(theta - h, &config, &channel).unwrap();
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
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = worst <= 1e-4 && total.abs() <= 1e-8 && elapsed < 60.0;
    report(
        "4 Lindblad derivative",
        pass,
        &format!("FD deviation {worst:.2e}, sum of derivative {total:.2e}"),
        elapsed,
    );
    assert!(pass, "worst {worst:.3e}, sum {total:.3e}, {elapsed:.1} s");
}

/// Criterion 5: receiver optimality at the truth (CFI/QFI in
/// [0.99, 1.0001]) and the bound ordering CFI <= QFI (1 + 1e-3) on the
/// full receiver grid. Runtime < 2 min.
#[test]
fn criterion_5_optimality_at_truth() {
    let t0 = Instant::now();
    let channel = fixture_channel();
    let cutoff = fixture_cutoff();
    let sel = select_omega(0.9, 0.7, &channel, cutoff).unwrap();
    let omegas = linspace(-2.0, 2.0, 41);
    let gammas = linspace(-1.0, 1.0, 21);
    let land = fi_landscape(&channel, &omegas, &gammas, cutoff).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = sel.ratio >= 0.99
        && sel.ratio <= 1.0001
        && land.max_ratio <= 1.0 + 1e-3
        && elapsed < 120.0;
    report(
        "5 optimality at truth",
        pass,
        &format!(
            "CFI/QFI at truth {:.6}, max grid ratio {:.6}",
            sel.ratio, land.max_ratio
        ),
        elapsed,
    );
    assert!(
        pass,
        "ratio {:.6}, grid {:.6}, {elapsed:.1} s",
        sel.ratio, land.max_ratio
    );
}

/// Criterion 6: the closed-form lower bound on every retained cell, with
/// l2 >= 1 and l3 in (0, 1), including a nonzero phase-error case.
/// Runtime < 30 s.
#[test]
fn criterion_6_lower_bound() {
    let t0 = Instant::now();
    let channel = ChannelParams::new(0.85, 0.7, 0.3, 0.4).unwrap();
    let cutoff = fixture_cutoff();
    let form = williamson_two_mode(&output_covariance(&channel)).unwrap();
    let omega = select_omega(0.85, 0.7, &channel, cutoff).unwrap().omega;
    let mut detail = String::new();
    let mut pass = true;
    for gerr in [0.0, 0.5] {
        let config = ReceiverConfig {
            omega,
            gamma_hat: 0.7 + gerr,
            cutoff,
        };
        let pmf = pmf_tms_pnr(0.85, &config, &channel).unwrap();
        // The bound must hold within -1e-12 slack everywhere retained.
        let rep = pmf_lower_bound_check(&pmf, &form, &config).unwrap();
        pass &= rep.ok && rep.l2 >= 1.0 && rep.l3 > 0.0 && rep.l3 < 1.0;
        detail = format!(
            "l2 = {:.4}, l3 = {:.4}, violation: {:?}",
            rep.l2, rep.l3, rep.violating_cell
        );
        if !rep.ok {
            break;
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = pass && elapsed < 30.0;
    report("6 lower bound", pass, &detail, elapsed);
    assert!(pass, "{detail}, {elapsed:.1} s");
}

/// Criterion 7: the heterodyne closed forms match an independent 2-D
/// numeric maximization within 1e-9 on 100 random datasets, and the
/// preliminary RMS error follows the square-root law within a factor of
/// two across f in {1e2, 1e3, 1e4}. Runtime < 2 min.
#[test]
fn criterion_7_heterodyne_mle() {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        // Deterministic scenario scatter.
        let theta_t = 0.3 + 0.6 * ((i as f64 * 0.61803) % 1.0);
        let gamma_t = -3.0 + 6.0 * ((i as f64 * 0.31831) % 1.0);
        let n_s = 0.5 + 1.5 * ((i as f64 * 0.70711) % 1.0);
        let n_b = 0.1 + 0.7 * ((i as f64 * 0.57722) % 1.0);
        let p = ChannelParams::new(theta_t, gamma_t, n_s, n_b).unwrap();
        let samples = sample_heterodyne(&p, 150, 4000 + i);
        let closed = mle_preliminary(&samples, n_s).unwrap();
        let pairs: Vec<(f64, f64)> = samples.iter().map(|s| (s.a, s.b)).collect();
        let (theta_num, _) = common::heterodyne_mle_numeric(&pairs, n_s);
        worst = worst.max((closed.theta_p - theta_num).abs());
    }
    // Square-root error law across two decades of batch size.
    let p = fixture_channel();
    let mut rms = Vec::new();
    for (fi, f) in [100usize, 1000, 10000].into_iter().enumerate() {
        let mut sq = 0.0;
        let trials = 500;
        for t in 0..trials {
            let samples = sample_heterodyne(&p, f, 80_000 + (fi * trials + t) as u64);
            let e = mle_preliminary(&samples, p.n_s).unwrap();
            sq += (e.theta_p - p.theta) * (e.theta_p - p.theta);
        }
        rms.push((sq / trials as f64).sqrt());
    }
    let mut rate_ok = true;
    for w in rms.windows(2) {
        let ratio = w[0] / w[1];
        rate_ok &= ratio > 10.0f64.sqrt() / 2.0 && ratio < 2.0 * 10.0f64.sqrt();
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = worst <= 1e-9 && rate_ok && elapsed < 120.0;
    report(
        "7 heterodyne MLE",
        pass,
        &format!(
            "closed form vs numeric {worst:.2e}; rms over f = {:?}",
            rms.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>()
        ),
        elapsed,
    );
    assert!(pass, "worst {worst:.3e}, rms {rms:?}, {elapsed:.1} s");
}

// Shared fixture sweeps for the Monte Carlo criteria.
struct SharedSweep {
    all: Vec<NTrials>,
    qfi: f64,
    elapsed: f64,
}

fn shared_sweep() -> &'static SharedSweep {
    static SWEEP: OnceLock<SharedSweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let t0 = Instant::now();
        let base = fixture_base(20260811);
        let workers = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(2);
        let small = SweepSpec {
            n_list: vec![250, 1000],
            trials_per_n: 500,
            base,
            metrics: MetricSet::default(),
        };
        let big = SweepSpec {
            n_list: vec![4000],
            trials_per_n: 2000,
            base,
            metrics: MetricSet::default(),
        };
        let mut all = run_sweep(&small, workers).expect("small sweep");
        all.extend(run_sweep(&big, workers).expect("big sweep"));
        let qfi = qfi_at_truth(&base.channel, base.cutoff).expect("QFI at truth");
        SharedSweep {
            all,
            qfi,
            elapsed: t0.elapsed().as_secs_f64(),
        }
    })
}

/// Criterion 8: asymptotic normality at the fixture, n = 4000 with 2000
/// trials: KS statistic below the 1% asymptotic band and variance ratio in
/// [0.85, 1.15].
#[test]
fn criterion_8_two_stage_normality() {
    let shared = shared_sweep();
    let t0 = Instant::now();
    let big = shared
        .all
        .iter()
        .find(|nt| nt.n_total == 4000)
        .expect("n = 4000 in sweep");
    let rep = normality_test(big, shared.qfi).unwrap();
    let band = 1.63 / (2000.0f64).sqrt();
    let pass = rep.ks_stat < band && rep.var_ratio >= 0.85 && rep.var_ratio <= 1.15;
    let elapsed = t0.elapsed().as_secs_f64() + shared.elapsed;
    report(
        "8 two-stage normality",
        pass,
        &format!(
            "KS {:.4} (band {band:.4}), variance ratio {:.4}, mean z {:.4}, {} trials, {} failures",
            rep.ks_stat,
            rep.var_ratio,
            rep.mean_z,
            rep.z_samples.len(),
            big.failures.len()
        ),
        elapsed,
    );
    assert!(
        pass,
        "KS {:.4} vs band {band:.4}, var ratio {:.4}",
        rep.ks_stat, rep.var_ratio
    );
}

/// Criterion 9: consistency and n*MSE trends: RMS strictly smaller at
/// n = 4000 than at n = 250, and n*MSE within 25% of 1/J at the largest n.
#[test]
fn criterion_9_consistency_and_mse_trend() {
    let shared = shared_sweep();
    let table = consistency_table(&shared.all);
    let rms250 = table
        .rows
        .iter()
        .find(|r| r.n_total == 250)
        .unwrap()
        .rms_refine;
    let rms4000 = table
        .rows
        .iter()
        .find(|r| r.n_total == 4000)
        .unwrap()
        .rms_refine;
    let mse = mse_vs_qcrb_curve(&shared.all, shared.qfi);
    let last = mse.last().unwrap();
    let ratio = last.n_mse / last.qcrb_inv;
    let decreasing_pairs = mse
        .windows(2)
        .filter(|w| w[1].n_mse < w[0].n_mse)
        .count();
    let prelim_beaten = table
        .rows
        .iter()
        .filter(|r| r.n_total >= 1000)
        .all(|r| r.rms_refine < r.rms_prelim);
    let pass = rms4000 < rms250
        && (ratio - 1.0).abs() <= 0.25
        && decreasing_pairs * 2 >= mse.len() - 1
        && prelim_beaten;
    report(
        "9 consistency and MSE trend",
        pass,
        &format!(
            "rms(250) = {rms250:.4}, rms(4000) = {rms4000:.4}, n*MSE/J^-1 = {ratio:.3}, \
             decreasing pairs {decreasing_pairs}/{}, spearman {:.2}",
            mse.len() - 1,
            table.spearman_rms_vs_n
        ),
        shared.elapsed,
    );
    assert!(pass, "rms {rms250:.4} -> {rms4000:.4}, ratio {ratio:.3}");
}

/// Criterion 10: byte-identical artifacts for identical seeds, twice in a
/// row. Runtime < 5 min.
#[test]
fn criterion_10_determinism() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = qloss_core::config::fixture_config();
    cfg.run.n_list = vec![300, 600];
    cfg.run.trials_per_n = 40;
    cfg.fi_map.omega_points = 9;
    cfg.fi_map.gamma_err_points = 5;
    let config_path = dir.path().join("exp.toml");
    std::fs::write(&config_path, cfg.to_toml()).unwrap();

    let mut artifacts: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for pass_idx in 0..2 {
        let out = dir.path().join(format!("run{pass_idx}"));
        qloss_core::cli::cmd_run(&config_path, None, Some(2), Some(out.clone()), None).unwrap();
        qloss_core::cli::cmd_fi_map(&config_path, None, Some(2), Some(out.clone())).unwrap();
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        artifacts.push(files);
    }
    let names: Vec<&String> = artifacts[0].iter().map(|(n, _)| n).collect();
    let pass = artifacts[0] == artifacts[1] && names.len() >= 4;
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = pass && elapsed < 300.0;
    report(
        "10 determinism",
        pass,
        &format!("{} artifacts byte-identical across reruns: {names:?}", names.len()),
        elapsed,
    );
    assert!(pass, "artifacts differ or too slow ({elapsed:.1} s)");
}

/// Thermal-weight sanity used by several criteria: r weights are a
/// normalized distribution on the fixture form.
#[test]
fn fixture_r_weights_normalized() {
    let channel = fixture_channel();
    let form = williamson_two_mode(&output_covariance(&channel)).unwrap();
    let mut total = 0.0;
    for s in 0..=300 {
        for t in 0..=300 {
            total += r_weight(s, t, &form);
        }
    }
    assert!((total - 1.0).abs() < 1e-10);
}
