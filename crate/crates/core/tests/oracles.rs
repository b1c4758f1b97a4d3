//! Cross-module oracle checks: the recursive conditional covariance against
//! batch conditioning, and the analytic propagation against sampled
//! statistics.

use nalgebra::SVector;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use macfb_core::covariance::{batch_mmse_cov, run_deterministic};
use macfb_core::linalg::PsdDecomposition;
use macfb_core::model::{
    assemble_joint_transition, layout, noise_cov, ControllerSchedule, MatQ,
};
use macfb_core::optimize::random_schedule;
use macfb_core::simulate::monte_carlo;
use macfb_core::{SystemConfig, Q_DIM};

fn random_config(rng: &mut ChaCha12Rng, horizon: usize) -> SystemConfig {
    let mut config = SystemConfig::unit(horizon);
    config.sigma_f_sq = rng.random_range(0.4..2.0);
    config.sigma_b1_sq = rng.random_range(0.1..2.0);
    config.sigma_b2_sq = rng.random_range(0.1..2.0);
    config.sigma_m1_sq = rng.random_range(0.5..2.0);
    config.sigma_m2_sq = rng.random_range(0.5..2.0);
    config.p1 = rng.random_range(0.3..2.0);
    config.p2 = rng.random_range(0.3..2.0);
    config.pr = rng.random_range(0.3..2.0);
    config
}

#[test]
fn batch_and_recursive_covariances_agree_on_100_random_schedules() {
    let mut rng = ChaCha12Rng::seed_from_u64(0x0acc);
    for case in 0..100 {
        let horizon = 1 + case % 8;
        let config = random_config(&mut rng, horizon);
        let schedule = random_schedule(&config, &mut rng, 1.2);
        let traj = run_deterministic(&schedule, &config).unwrap();
        let recursive = traj.terminal_msg_cov();
        let batch = batch_mmse_cov(&schedule, &config).unwrap();
        let scale = batch.amax().max(1e-12);
        let rel = (batch - recursive).amax() / scale;
        assert!(rel <= 1e-8, "case {case} (T = {horizon}): rel err {rel:e}");
    }
}

#[test]
fn batch_equivalence_holds_at_full_box_scale() {
    // Large in-box parameters over eight steps push the joint state trace
    // past 1e16; the two conditioning routes must still agree.
    for seed in 0..10u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut config = SystemConfig::unit(8);
        config.pr = 1.0;
        let schedule = random_schedule(&config, &mut rng, 9.5);
        let traj = run_deterministic(&schedule, &config).unwrap();
        assert!(traj.invariant_violations(&config).is_empty());
        let batch = batch_mmse_cov(&schedule, &config).unwrap();
        let rel = (batch - traj.terminal_msg_cov()).amax() / batch.amax().max(1e-12);
        assert!(rel <= 1e-8, "seed {seed}: rel err {rel:e}");
    }
}

#[test]
fn one_step_propagation_matches_sampled_covariance() {
    // Sample q ~ N(0, Sigma), push it through one random transition with
    // fresh noises, and compare the empirical covariance of the result
    // against the analytic propagation, entry by entry in standard errors.
    let mut rng = ChaCha12Rng::seed_from_u64(0x57e9);
    let config = random_config(&mut rng, 3);
    let schedule = random_schedule(&config, &mut rng, 1.0);
    let traj = run_deterministic(&schedule, &config).unwrap();

    let t = 1;
    let sigma_t = traj.sigma_q[t];
    let analytic = traj.sigma_q[t + 1];
    let g = &traj.gains[t];
    let (a, j) = assemble_joint_transition(&schedule, t, &g.d1.d, &g.d2.d, &g.dr.d);
    let sqrt = PsdDecomposition::new(&sigma_t).unwrap().sqrt();
    let w = noise_cov(&config);
    let w_sd = [w[(0, 0)].sqrt(), w[(1, 1)].sqrt(), w[(2, 2)].sqrt()];

    const N: usize = 1_000_000;
    let mut sum = SVector::<f64, Q_DIM>::zeros();
    let mut sum_sq = MatQ::zeros();
    let mut sum_4 = MatQ::zeros();
    for _ in 0..N {
        let z = SVector::<f64, Q_DIM>::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = SVector::<f64, 3>::from_fn(|k, _| w_sd[k] * rng.sample::<f64, _>(StandardNormal));
        let q_next = a * (sqrt * z) + j * noise;
        sum += q_next;
        for i in 0..Q_DIM {
            for k in 0..Q_DIM {
                let p = q_next[i] * q_next[k];
                sum_sq[(i, k)] += p;
                sum_4[(i, k)] += p * p;
            }
        }
    }
    let n = N as f64;
    for i in 0..Q_DIM {
        for k in 0..Q_DIM {
            let mean_i = sum[i] / n;
            let mean_k = sum[k] / n;
            let cov = (sum_sq[(i, k)] - n * mean_i * mean_k) / (n - 1.0);
            let p_mean = sum_sq[(i, k)] / n;
            let p_var = ((sum_4[(i, k)] - n * p_mean * p_mean) / (n - 1.0)).max(0.0);
            let se = (p_var / n).sqrt();
            let diff = (cov - analytic[(i, k)]).abs();
            assert!(
                diff <= 5.0 * se.max(1e-12),
                "entry ({i}, {k}): diff {diff:e}, se {se:e}"
            );
        }
    }
}

#[test]
fn monte_carlo_matches_repetition_closed_form() {
    // Unit slot powers over four uses: terminal MSE 10/9.
    let mut config = SystemConfig::unit(4);
    config.p1 = 4.0;
    config.p2 = 4.0;
    config.pr = 0.0;
    let schedule = ControllerSchedule::repetition(4);
    let report = monte_carlo(&schedule, &config, 20_000, 0x0e11).unwrap();
    assert!(report.pass, "max |z| = {}", report.max_abs_z);
    let se = report.empirical_mse / (report.samples as f64).sqrt();
    assert!(
        (report.empirical_mse - 10.0 / 9.0).abs() <= 5.0 * (se * 2.0),
        "empirical {} vs 10/9",
        report.empirical_mse
    );
}

#[test]
fn trajectory_substreams_are_order_independent() {
    let config = SystemConfig::unit(3);
    let schedule = ControllerSchedule::repetition(3);
    let traj = run_deterministic(&schedule, &config).unwrap();
    let plan = macfb_core::simulate::SimPlan::new(&schedule, &config, &traj);
    // Sampling index 5 then 2 must equal sampling 2 then 5, bit for bit.
    let five_first = macfb_core::simulate::sample_trajectory(&plan, &config, 9, 5);
    let two_second = macfb_core::simulate::sample_trajectory(&plan, &config, 9, 2);
    let two_first = macfb_core::simulate::sample_trajectory(&plan, &config, 9, 2);
    let five_second = macfb_core::simulate::sample_trajectory(&plan, &config, 9, 5);
    assert_eq!(five_first.m1_hat.to_bits(), five_second.m1_hat.to_bits());
    assert_eq!(two_first.m1_hat.to_bits(), two_second.m1_hat.to_bits());
    assert_eq!(five_first.yr, five_second.yr);
    assert_eq!(two_first.yr, two_second.yr);
}

#[test]
fn monte_carlo_consistency_on_a_random_feedback_schedule() {
    let mut rng = ChaCha12Rng::seed_from_u64(0x3c4d);
    let config = random_config(&mut rng, 4);
    let schedule = random_schedule(&config, &mut rng, 1.0);
    let report = monte_carlo(&schedule, &config, 200_000, 0xfeed).unwrap();
    assert!(
        report.pass,
        "max |z| = {} (covariance {}, power {}, mse {})",
        report.max_abs_z, report.max_sigma_q_z, report.max_power_z, report.mse_z
    );
}

#[test]
fn estimator_is_neither_better_nor_worse_than_analytic() {
    // Both directions of the optimality check: empirical MSE within
    // sampling error of the conditional variance.
    let mut config = SystemConfig::unit(3);
    config.pr = 1.2;
    let mut schedule = ControllerSchedule::repetition(3);
    for step in &mut schedule.steps {
        step.g1.c = macfb_core::model::Vec3::new(0.5, 0.0, -0.2);
        step.g2.c = macfb_core::model::Vec3::new(-0.3, 0.15, 0.0);
        step.gr.c = macfb_core::model::Vec3::new(0.8, 0.2, 0.0);
    }
    let report = monte_carlo(&schedule, &config, 150_000, 0xbeef).unwrap();
    assert!(report.mse_z.abs() <= 5.0, "mse z = {}", report.mse_z);
    let sigma_q_ok = report.max_sigma_q_z <= 5.0;
    assert!(sigma_q_ok, "covariance z = {}", report.max_sigma_q_z);
}

#[test]
fn conditional_variances_never_exceed_priors_row() {
    // The observed-output coordinate of the conditional covariance stays
    // pinned at zero and message variances stay below their priors.
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    for _ in 0..10 {
        let config = random_config(&mut rng, 5);
        let schedule = random_schedule(&config, &mut rng, 1.3);
        let traj = run_deterministic(&schedule, &config).unwrap();
        let issues = traj.invariant_violations(&config);
        assert!(issues.is_empty(), "{issues:?}");
        for t in 0..traj.horizon() {
            let (v1, v2) = traj.message_variances(t);
            assert!(v1 <= config.sigma_m1_sq + 1e-9);
            assert!(v2 <= config.sigma_m2_sq + 1e-9);
            let s = &traj.sigma_r[t];
            for k in 0..macfb_core::P_DIM {
                assert!(s[(layout::YR, k)].abs() <= 1e-9);
            }
        }
    }
}
