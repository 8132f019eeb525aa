use qloss_ffi::*;
use std::ffi::CStr;

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(qloss_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn channel_pmf_and_qfi_roundtrip() {
    let mut channel = std::ptr::null_mut();
    let st = qloss_channel_new(0.9, 0.7, 0.3, 0.4, &mut channel);
    assert_eq!(st, QlossStatus::Ok);
    assert!(!channel.is_null());

    let mut qfi = 0.0f64;
    assert_eq!(qloss_qfi(channel, 20, 1e-6, &mut qfi), QlossStatus::Ok);
    assert!((qfi - 0.6188).abs() < 0.01, "qfi {qfi}");

    let mut omega = 0.0f64;
    let mut ratio = 0.0f64;
    assert_eq!(
        qloss_select_omega(channel, 0.9, 0.7, 20, 1e-6, &mut omega, &mut ratio),
        QlossStatus::Ok
    );
    assert!(ratio > 0.99 && omega < 0.0);

    let mut pmf = std::ptr::null_mut();
    assert_eq!(
        qloss_pmf_new(channel, 0.9, omega, 0.7, 20, 1e-4, &mut pmf),
        QlossStatus::Ok
    );
    let mut total = 0.0f64;
    for k in 0..=20u32 {
        for m in 0..=20u32 {
            let mut p = 0.0f64;
            assert_eq!(qloss_pmf_prob(pmf, k, m, &mut p), QlossStatus::Ok);
            assert!(p >= 0.0);
            total += p;
        }
    }
    let mut tail = 0.0f64;
    assert_eq!(qloss_pmf_tail_mass(pmf, &mut tail), QlossStatus::Ok);
    assert!((total + tail - 1.0).abs() < 1e-9);
    qloss_pmf_free(pmf);
    qloss_channel_free(channel);
}

#[test]
fn invalid_arguments_are_reported() {
    let mut channel = std::ptr::null_mut();
    let st = qloss_channel_new(1.5, 0.0, 0.3, 0.4, &mut channel);
    assert_eq!(st, QlossStatus::InvalidArgument);
    let msg = unsafe { CStr::from_ptr(qloss_last_error_message()) };
    assert!(msg.to_str().unwrap().contains("theta"));
    assert_eq!(
        qloss_channel_new(0.9, 0.0, 0.3, 0.4, std::ptr::null_mut()),
        QlossStatus::InvalidArgument
    );
    // Freeing null handles is a no-op.
    qloss_channel_free(std::ptr::null_mut());
    qloss_pmf_free(std::ptr::null_mut());
}

#[test]
fn trial_runs_through_the_abi() {
    let mut channel = std::ptr::null_mut();
    assert_eq!(
        qloss_channel_new(0.9, 0.7, 0.3, 0.4, &mut channel),
        QlossStatus::Ok
    );
    let (mut tr, mut tp, mut gh) = (0.0f64, 0.0f64, 0.0f64);
    let st = qloss_run_trial(
        channel, 400, 0.5, 20, 1e-6, 0.5, 42, &mut tr, &mut tp, &mut gh,
    );
    assert_eq!(st, QlossStatus::Ok);
    assert!((0.5..=1.0).contains(&tr));
    assert!((0.5..=1.0).contains(&tp));
    // Deterministic: same seed, same outputs.
    let (mut tr2, mut tp2, mut gh2) = (0.0f64, 0.0f64, 0.0f64);
    qloss_run_trial(channel, 400, 0.5, 20, 1e-6, 0.5, 42, &mut tr2, &mut tp2, &mut gh2);
    assert_eq!(tr, tr2);
    assert_eq!(gh, gh2);
    qloss_channel_free(channel);
}

#[test]
fn cutoff_failure_maps_to_status() {
    let mut channel = std::ptr::null_mut();
    assert_eq!(
        qloss_channel_new(0.9, 0.7, 0.3, 0.4, &mut channel),
        QlossStatus::Ok
    );
    let mut pmf = std::ptr::null_mut();
    let st = qloss_pmf_new(channel, 0.9, -0.55, 0.7, 3, 1e-8, &mut pmf);
    assert_eq!(st, QlossStatus::CutoffTooSmall);
    qloss_channel_free(channel);
}
