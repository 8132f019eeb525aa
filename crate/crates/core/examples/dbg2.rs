use qloss_core::fock::FockCutoff;
use qloss_core::gaussian::ChannelParams;
use qloss_core::twostage::*;

fn main() {
    let cfg = RunConfig {
        channel: ChannelParams::new(0.9, 0.7, 0.3, 0.4).unwrap(),
        n_total: 400,
        schedule_q: 0.5,
        cutoff: FockCutoff::new(25, 1e-8).unwrap(),
        seed: 20260811,
        theta_lo: 0.5,
    };
    let r = run_trial(&cfg).unwrap();
    println!("theta_r = {:.17e}", r.theta_r);
    println!("theta_p = {:.17e}", r.theta_p);
    println!("gamma_hat = {:.17e}", r.gamma_hat);
    println!("omega = {:.17e}", r.omega);
    println!("loglik = {:.17e}", r.loglik_at_max);
    println!("f_n={} n_refine={} boundary={} tail_draws={}", r.f_n, r.n_refine, r.boundary_max, r.tail_draws);
}
