//! Acceptance suite: every criterion runs at its stated tolerance and
//! prints one pass/fail line. Run with `cargo test --test acceptance --
//! --nocapture` to see the lines on success.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use macfb_core::covariance::{batch_mmse_cov, run_deterministic};
use macfb_core::model::{ControllerSchedule, Mat3, Node};
use macfb_core::optimize::{joint_optimize, random_schedule, OptimizeOptions};
use macfb_core::simulate::monte_carlo;
use macfb_core::{PowerMode, SystemConfig};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

impl Outcome {
    fn report(&self) -> String {
        format!(
            "criterion {}: {} ({})",
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

fn random_config(rng: &mut ChaCha12Rng, horizon: usize) -> SystemConfig {
    let mut config = SystemConfig::unit(horizon);
    config.sigma_f_sq = rng.random_range(0.4..2.0);
    config.sigma_b1_sq = rng.random_range(0.1..2.0);
    config.sigma_b2_sq = rng.random_range(0.1..2.0);
    config.sigma_m1_sq = rng.random_range(0.5..2.0);
    config.sigma_m2_sq = rng.random_range(0.5..2.0);
    config.p1 = rng.random_range(0.3..2.0);
    config.p2 = rng.random_range(0.3..2.0);
    config.pr = rng.random_range(0.3..1.5);
    config
}

fn criterion_oracle_equivalence(runs: &mut Vec<(SystemConfig, ControllerSchedule)>) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(0xacce551);
    let mut worst = 0.0f64;
    let mut pass = true;
    let scales = [0.8, 1.5, 3.0];
    for case in 0..100 {
        let horizon = 1 + case % 8;
        let config = random_config(&mut rng, horizon);
        let schedule = random_schedule(&config, &mut rng, scales[case % scales.len()]);
        let traj = run_deterministic(&schedule, &config).unwrap();
        let recursive = traj.terminal_msg_cov();
        let batch = batch_mmse_cov(&schedule, &config).unwrap();
        let rel = (batch - recursive).amax() / batch.amax().max(1e-12);
        worst = worst.max(rel);
        if rel > 1e-8 {
            pass = false;
        }
        if case < 20 {
            runs.push((config, schedule));
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        name: "1 oracle equivalence",
        pass: pass && elapsed < Duration::from_secs(10),
        detail: format!(
            "100 schedules T<=8, max rel err {worst:.2e} vs 1e-8, {:.2}s vs 10s",
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_monte_carlo(runs: &mut Vec<(SystemConfig, ControllerSchedule)>) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(0xacce552);
    let mut worst = 0.0f64;
    let mut pass = true;
    for _ in 0..10 {
        let config = random_config(&mut rng, 4);
        let schedule = random_schedule(&config, &mut rng, 1.0);
        let report = monte_carlo(&schedule, &config, 200_000, 0x5eed2).unwrap();
        worst = worst.max(report.max_abs_z);
        if !report.pass {
            pass = false;
        }
        runs.push((config, schedule));
    }
    let elapsed = start.elapsed();
    Outcome {
        name: "2 monte carlo consistency",
        pass: pass && elapsed < Duration::from_secs(120),
        detail: format!(
            "10 schedules T=4 N=2e5, max |z| {worst:.2} vs 5, {:.1}s vs 120s",
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_closed_form_anchors() -> Outcome {
    let mut checks = Vec::new();

    let mut zero = SystemConfig::unit(3);
    zero.p1 = 0.0;
    zero.p2 = 0.0;
    zero.pr = 0.0;
    zero.sigma_m1_sq = 1.25;
    zero.sigma_m2_sq = 0.75;
    let cost = run_deterministic(&ControllerSchedule::repetition(3), &zero)
        .unwrap()
        .terminal_cost;
    checks.push((
        (cost - 2.0).abs() == 0.0,
        format!("zero-power {cost} == 2 exactly"),
    ));

    let unit1 = SystemConfig::unit(1);
    let traj = run_deterministic(&ControllerSchedule::repetition(1), &unit1).unwrap();
    let (v1, v2) = traj.message_variances(0);
    checks.push((
        (v1 - 2.0 / 3.0).abs() <= 1e-10 && (v2 - 2.0 / 3.0).abs() <= 1e-10,
        format!("single-step MMSE {v1:.12} within 1e-10 of 2/3"),
    ));

    let mut rep = SystemConfig::unit(4);
    rep.p1 = 4.0;
    rep.p2 = 4.0;
    rep.pr = 0.0;
    let cost = run_deterministic(&ControllerSchedule::repetition(4), &rep)
        .unwrap()
        .terminal_cost;
    checks.push((
        (cost - 10.0 / 9.0).abs() <= 1e-10,
        format!("repetition {cost:.12} within 1e-10 of 10/9"),
    ));

    Outcome {
        name: "3 closed-form anchors",
        pass: checks.iter().all(|(ok, _)| *ok),
        detail: checks
            .iter()
            .map(|(ok, msg)| format!("{}{}", if *ok { "" } else { "FAILED: " }, msg))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn criterion_optimizer_capability() -> Outcome {
    let start = Instant::now();
    let mut config = SystemConfig::unit(2);
    config.pr = 0.0;
    let mut options = OptimizeOptions::new(0xacce554);
    options.restarts = 8;
    options.budget = 20_000;
    let report = joint_optimize(&config, &options).unwrap();
    let elapsed = start.elapsed();
    let pass = report.best_cost <= 1.0 + 1e-2
        && report.eval_count <= 20_000
        && elapsed < Duration::from_secs(60);
    Outcome {
        name: "4 optimizer capability",
        pass,
        detail: format!(
            "best cost {:.6} vs 1.01, {} evals vs 20000, {:.1}s vs 60s",
            report.best_cost,
            report.eval_count,
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_strategy_nesting() -> Outcome {
    let mut rng = ChaCha12Rng::seed_from_u64(0xacce555);
    let mut pass = true;
    let mut details = Vec::new();
    for case in 0..5 {
        let horizon = 2 + case % 3;
        let config = random_config(&mut rng, horizon);

        let mut passive_options = OptimizeOptions::new(1000 + case as u64);
        passive_options.restarts = 2;
        passive_options.budget = 4_000;
        passive_options.passive = true;
        let passive = joint_optimize(&config, &passive_options).unwrap();

        let mut active_options = OptimizeOptions::new(2000 + case as u64);
        active_options.restarts = 3;
        active_options.budget = 6_000;
        active_options.extra_warm_starts = vec![passive.best_schedule.clone()];
        let active = joint_optimize(&config, &active_options).unwrap();

        if active.best_cost > passive.best_cost + 1e-9 {
            pass = false;
            details.push(format!(
                "case {case}: active {} > passive {}",
                active.best_cost, passive.best_cost
            ));
        }

        let mut inst_options = OptimizeOptions::new(3000 + case as u64);
        inst_options.restarts = 2;
        inst_options.budget = 4_000;
        let inst = joint_optimize(&config, &inst_options).unwrap();

        let mut total_config = config.clone();
        total_config.power_mode = PowerMode::Total;
        let mut total_options = inst_options.clone();
        total_options.extra_warm_starts = vec![inst.best_schedule.clone()];
        let total = joint_optimize(&total_config, &total_options).unwrap();

        if total.best_cost > inst.best_cost + 1e-6 {
            pass = false;
            details.push(format!(
                "case {case}: total {} > instantaneous {}",
                total.best_cost, inst.best_cost
            ));
        }
    }
    Outcome {
        name: "5 strategy-class nesting",
        pass,
        detail: if details.is_empty() {
            "active <= passive + 1e-9 and total <= instantaneous + 1e-6 on 5 random configs".into()
        } else {
            details.join("; ")
        },
    }
}

fn criterion_invariant_suite(runs: &[(SystemConfig, ControllerSchedule)]) -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();

    for (idx, (config, schedule)) in runs.iter().enumerate() {
        let traj = run_deterministic(schedule, config).unwrap();
        let issues = traj.invariant_violations(config);
        if !issues.is_empty() {
            pass = false;
            details.push(format!("run {idx}: {}", issues.join(", ")));
        }
    }

    // Gauge invariance on a sample of the recorded runs: sender swaps of
    // the non-seeded coordinates and any receiver permutation.
    let mut swap12 = Mat3::identity();
    swap12[(1, 1)] = 0.0;
    swap12[(2, 2)] = 0.0;
    swap12[(1, 2)] = 1.0;
    swap12[(2, 1)] = 1.0;
    let mut cycle = Mat3::zeros();
    cycle[(0, 2)] = 1.0;
    cycle[(1, 0)] = 1.0;
    cycle[(2, 1)] = 1.0;
    for (idx, (config, schedule)) in runs.iter().take(10).enumerate() {
        let base = run_deterministic(schedule, config).unwrap().terminal_cost;
        for (node, perm) in [
            (Node::Sender1, &swap12),
            (Node::Sender2, &swap12),
            (Node::Receiver, &cycle),
        ] {
            let mut conj = schedule.clone();
            conj.conjugate_node(node, perm);
            let cost = run_deterministic(&conj, config).unwrap().terminal_cost;
            if (cost - base).abs() > 1e-9 {
                pass = false;
                details.push(format!(
                    "run {idx}: gauge conjugation of {} moved cost by {:.2e}",
                    node.label(),
                    (cost - base).abs()
                ));
            }
        }
    }

    Outcome {
        name: "6 invariant suite",
        pass,
        detail: if details.is_empty() {
            format!(
                "{} recorded runs: covariances symmetric PSD, monotone message variances, \
                 output row pinned, innovation >= forward noise, gauge-invariant cost",
                runs.len()
            )
        } else {
            details.join("; ")
        },
    }
}

fn run_cli(args: &[&str], threads: &str) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_macfb"))
        .args(args)
        .env("RAYON_NUM_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn criterion_reproducibility() -> Outcome {
    let dir = std::env::temp_dir().join("macfb_acceptance_repro");
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    let config_path = dir.join("config.json");
    fs::write(
        &config_path,
        r#"{
  "horizon": 3,
  "sigma_f_sq": 1.0,
  "sigma_b1_sq": 0.5,
  "sigma_b2_sq": 0.5,
  "sigma_m1_sq": 1.0,
  "sigma_m2_sq": 1.0,
  "p1": 1.0,
  "p2": 1.0,
  "pr": 0.8,
  "sweep": { "horizons": [1, 2] }
}"#,
    )
    .unwrap();
    let config = config_path.to_str().unwrap();

    let mut pass = true;
    let mut details = Vec::new();
    let compare = |a: &Path, b: &Path, what: &str, pass: &mut bool, details: &mut Vec<String>| {
        let ba = fs::read(a).unwrap();
        let bb = fs::read(b).unwrap();
        if ba != bb {
            *pass = false;
            details.push(format!("{what} differs between serial and parallel runs"));
        }
    };

    for (threads, sub) in [("1", "serial"), ("4", "parallel")] {
        let out_opt = dir.join(format!("opt_{sub}"));
        let status = run_cli(
            &[
                "optimize",
                "--config",
                config,
                "--seed",
                "7",
                "--restarts",
                "2",
                "--budget",
                "3000",
                "--out",
                out_opt.to_str().unwrap(),
            ],
            threads,
        );
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    }
    compare(
        &dir.join("opt_serial/optimize_report.json"),
        &dir.join("opt_parallel/optimize_report.json"),
        "optimize report",
        &mut pass,
        &mut details,
    );
    compare(
        &dir.join("opt_serial/best_schedule.json"),
        &dir.join("opt_parallel/best_schedule.json"),
        "best schedule",
        &mut pass,
        &mut details,
    );

    for (threads, sub) in [("1", "serial"), ("4", "parallel")] {
        let out_val = dir.join(format!("val_{sub}"));
        let status = run_cli(
            &[
                "validate",
                "--config",
                config,
                "--schedule",
                dir.join("opt_serial/best_schedule.json").to_str().unwrap(),
                "--samples",
                "20000",
                "--seed",
                "3",
                "--out",
                out_val.to_str().unwrap(),
            ],
            threads,
        );
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    }
    compare(
        &dir.join("val_serial/validate_report.json"),
        &dir.join("val_parallel/validate_report.json"),
        "validate report",
        &mut pass,
        &mut details,
    );

    for (threads, sub) in [("1", "serial"), ("4", "parallel")] {
        let out_sweep = dir.join(format!("sweep_{sub}"));
        let status = run_cli(
            &[
                "sweep",
                "--config",
                config,
                "--seed",
                "9",
                "--restarts",
                "2",
                "--budget",
                "1500",
                "--out",
                out_sweep.to_str().unwrap(),
            ],
            threads,
        );
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    }
    compare(
        &dir.join("sweep_serial/sweep.csv"),
        &dir.join("sweep_parallel/sweep.csv"),
        "sweep table",
        &mut pass,
        &mut details,
    );

    Outcome {
        name: "7 reproducibility",
        pass,
        detail: if details.is_empty() {
            "optimize/validate/sweep outputs byte-identical at 1 and 4 threads".into()
        } else {
            details.join("; ")
        },
    }
}

#[test]
fn acceptance_suite() {
    let mut runs: Vec<(SystemConfig, ControllerSchedule)> = Vec::new();
    let outcomes = vec![
        criterion_oracle_equivalence(&mut runs),
        criterion_monte_carlo(&mut runs),
        criterion_closed_form_anchors(),
        criterion_optimizer_capability(),
        criterion_strategy_nesting(),
        criterion_invariant_suite(&runs),
        criterion_reproducibility(),
    ];
    for outcome in &outcomes {
        println!("{}", outcome.report());
    }
    let failures: Vec<&Outcome> = outcomes.iter().filter(|o| !o.pass).collect();
    assert!(
        failures.is_empty(),
        "failed criteria:\n{}",
        failures
            .iter()
            .map(|o| o.report())
            .collect::<Vec<_>>()
            .join("\n")
    );
}
