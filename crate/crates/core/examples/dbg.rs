use qloss_core::fock::FockCutoff;
use qloss_core::gaussian::ChannelParams;
use qloss_core::harness::*;
use qloss_core::twostage::*;
use std::time::Instant;

fn main() {
    let base = RunConfig {
        channel: ChannelParams::new(0.9, 0.7, 0.3, 0.4).unwrap(),
        n_total: 4000,
        schedule_q: 0.5,
        cutoff: FockCutoff::new(25, 1e-8).unwrap(),
        seed: 20260811,
        theta_lo: 0.5,
    };
    let t0 = Instant::now();
    let spec_small = SweepSpec { n_list: vec![250, 1000], trials_per_n: 500, base, metrics: MetricSet::default() };
    let small = run_sweep(&spec_small, 2).unwrap();
    println!("small sweeps done in {:.0}s", t0.elapsed().as_secs_f64());
    let spec_big = SweepSpec { n_list: vec![4000], trials_per_n: 2000, base, metrics: MetricSet::default() };
    let big = run_sweep(&spec_big, 2).unwrap();
    println!("big sweep done at {:.0}s", t0.elapsed().as_secs_f64());
    let j = qfi_at_truth(&base.channel, base.cutoff).unwrap();
    let rep = normality_test(&big[0], j).unwrap();
    println!("n=4000 2000 trials: ks={:.5} (band 0.03645) var_ratio={:.4} mean_z={:.4} (3sd band {:.4}) excluded={}",
        rep.ks_stat, rep.var_ratio, rep.mean_z, 3.0*(1.0f64/j).sqrt()/ (rep.z_samples.len() as f64).sqrt(), rep.excluded_boundary);
    let all: Vec<NTrials> = small.into_iter().chain(big.into_iter()).collect();
    let tab = consistency_table(&all);
    for r in &tab.rows {
        println!("n={} f={} rms_r={:.5} rms_p={:.5} fail={} boundary={}", r.n_total, r.f_n, r.rms_refine, r.rms_prelim, r.failures, r.boundary_count);
    }
    println!("spearman = {:.3}", tab.spearman_rms_vs_n);
    for row in mse_vs_qcrb_curve(&all, j) {
        println!("n={}  n*MSE={:.4}  1/J={:.4}  ratio={:.3}", row.n_total, row.n_mse, row.qcrb_inv, row.n_mse / row.qcrb_inv);
    }
}
