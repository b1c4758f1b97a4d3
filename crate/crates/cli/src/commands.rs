//! Subcommand implementations.

use std::path::Path;

use macfb_core::covariance::run_deterministic;
use macfb_core::model::ControllerSchedule;
use macfb_core::optimize::{joint_optimize, OptimizeOptions};
use macfb_core::simulate::monte_carlo;
use macfb_core::SystemConfig;

use crate::formats::{
    load_json, write_json, EvaluateReport, ExperimentConfig, OptimizeReportFile, ScheduleFile,
    ValidateReport,
};
use crate::{CliError, CommonArgs};

fn load_experiment(common: &CommonArgs) -> Result<(ExperimentConfig, SystemConfig), CliError> {
    let mut experiment: ExperimentConfig = load_json(&common.config)?;
    if let Some(v) = common.cost_variant {
        experiment.cost_variant = v.into();
    }
    if let Some(m) = common.power_mode {
        experiment.power_mode = m.into();
    }
    let system = experiment.to_system();
    system.validate().map_err(CliError::from)?;
    Ok((experiment, system))
}

fn load_schedule(path: &Path, system: &SystemConfig) -> Result<ControllerSchedule, CliError> {
    let file: ScheduleFile = load_json(path)?;
    let schedule = file.to_schedule();
    schedule.validate(system).map_err(CliError::from)?;
    Ok(schedule)
}

fn require_seed(flag: Option<u64>, config: &ExperimentConfig) -> Result<u64, CliError> {
    flag.or(config.seed).ok_or_else(|| {
        CliError::Validation(
            "a seed is required: pass --seed or set \"seed\" in the config".into(),
        )
    })
}

pub fn evaluate(common: &CommonArgs, schedule_path: &Path) -> Result<(), CliError> {
    let (_, system) = load_experiment(common)?;
    let schedule = load_schedule(schedule_path, &system)?;
    let traj = run_deterministic(&schedule, &system)?;
    let report = EvaluateReport::from_trajectory(&traj, &system);

    let out = common.out.join("evaluate_report.json");
    write_json(&out, &report)?;

    println!("terminal cost: {:.12}", report.terminal_cost);
    println!("  t  msg1_var      msg2_var      power1    power2    powerr");
    for s in &report.per_step {
        println!(
            "{:>3}  {:<12.9} {:<12.9} {:<9.6} {:<9.6} {:<9.6}",
            s.t, s.msg1_var, s.msg2_var, s.power1, s.power2, s.powerr
        );
    }
    println!("report: {}", out.display());
    Ok(())
}

pub fn optimize(
    common: &CommonArgs,
    seed: Option<u64>,
    restarts: Option<usize>,
    budget: Option<usize>,
    passive: bool,
) -> Result<(), CliError> {
    let (experiment, system) = load_experiment(common)?;
    let seed = require_seed(seed, &experiment)?;
    let mut options = OptimizeOptions::new(seed);
    options.restarts = restarts.or(experiment.restarts).unwrap_or(4);
    options.budget = budget.or(experiment.budget).unwrap_or(10_000);
    if let Some(s) = experiment.sweeps {
        options.sweeps = s;
    }
    options.passive = passive || experiment.passive.unwrap_or(false);

    let report = joint_optimize(&system, &options)?;

    let report_path = common.out.join("optimize_report.json");
    let schedule_path = common.out.join("best_schedule.json");
    write_json(
        &report_path,
        &OptimizeReportFile::new(&report, seed, options.budget),
    )?;
    write_json(
        &schedule_path,
        &ScheduleFile::from_schedule(&report.best_schedule),
    )?;

    println!(
        "best cost: {:.12}  ({} evaluations, {} restarts, {} ms)",
        report.best_cost, report.eval_count, report.restarts, report.wall_time_ms
    );
    println!("baseline                 cost            improvement");
    let rows = [
        ("zero power", Some(report.baselines.zero_power)),
        (
            "repetition (no fb)",
            Some(report.baselines.no_feedback_repetition),
        ),
        ("single shot", Some(report.baselines.single_shot)),
        ("passive relay", report.passive_cost),
    ];
    for (name, cost) in rows {
        if let Some(c) = cost {
            println!("{:<24} {:<15.9} {:+.9}", name, c, c - report.best_cost);
        }
    }
    println!("report:   {}", report_path.display());
    println!("schedule: {}", schedule_path.display());
    Ok(())
}

pub fn validate(
    common: &CommonArgs,
    schedule_path: &Path,
    samples: Option<usize>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let (experiment, system) = load_experiment(common)?;
    let seed = require_seed(seed, &experiment)?;
    let samples = samples.or(experiment.samples).unwrap_or(10_000);
    let schedule = load_schedule(schedule_path, &system)?;

    let mc = monte_carlo(&schedule, &system, samples, seed)?;
    let report = ValidateReport::from_mc(&mc);
    let out = common.out.join("validate_report.json");
    write_json(&out, &report)?;

    println!(
        "{}  max |z| = {:.3} over {} samples (covariance {:.3}, power {:.3}, mse {:.3})",
        if report.pass { "PASS" } else { "FAIL" },
        report.max_abs_z,
        report.samples,
        report.max_sigma_q_z,
        report.max_power_z,
        report.mse_z.abs(),
    );
    println!(
        "empirical mse = {:.9} vs analytic {:.9}",
        report.empirical_mse, report.analytic_mse
    );
    println!("report: {}", out.display());
    Ok(())
}

pub fn sweep(
    common: &CommonArgs,
    seed: Option<u64>,
    restarts: Option<usize>,
    budget: Option<usize>,
) -> Result<(), CliError> {
    let (experiment, base_system) = load_experiment(common)?;
    let seed = require_seed(seed, &experiment)?;
    let restarts = restarts.or(experiment.restarts).unwrap_or(2);
    let budget = budget.or(experiment.budget).unwrap_or(4_000);

    let grid = experiment.sweep.clone().unwrap_or(crate::formats::SweepGrid {
        horizons: None,
        sigma_b_sqs: None,
        powers: None,
    });
    let horizons = grid.horizons.unwrap_or_else(|| vec![base_system.horizon]);
    let sigma_bs = grid
        .sigma_b_sqs
        .unwrap_or_else(|| vec![base_system.sigma_b1_sq]);
    let powers = grid.powers.unwrap_or_else(|| vec![base_system.p1]);
    if horizons.is_empty() || sigma_bs.is_empty() || powers.is_empty() {
        return Err(CliError::Validation(
            "sweep grid has an empty axis; every provided axis needs at least one value".into(),
        ));
    }

    let mut table: Vec<u8> = Vec::new();
    {
        let mut writer = csv::Writer::from_writer(&mut table);
        writer
            .write_record([
                "horizon",
                "sigma_b_sq",
                "power",
                "best_cost",
                "zero_power",
                "repetition",
                "single_shot",
                "passive",
            ])
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        for &horizon in &horizons {
            for &sigma_b in &sigma_bs {
                for &power in &powers {
                    let mut system = base_system.clone();
                    system.horizon = horizon;
                    system.sigma_b1_sq = sigma_b;
                    system.sigma_b2_sq = sigma_b;
                    system.p1 = power;
                    system.p2 = power;
                    system.validate().map_err(CliError::from)?;

                    let mut options = OptimizeOptions::new(seed);
                    options.restarts = restarts;
                    options.budget = budget;
                    options.passive = experiment.passive.unwrap_or(false);
                    let report = joint_optimize(&system, &options)?;
                    let passive = report
                        .passive_cost
                        .map(|c| format!("{c}"))
                        .unwrap_or_default();
                    writer
                        .write_record([
                            horizon.to_string(),
                            format!("{sigma_b}"),
                            format!("{power}"),
                            format!("{}", report.best_cost),
                            format!("{}", report.baselines.zero_power),
                            format!("{}", report.baselines.no_feedback_repetition),
                            format!("{}", report.baselines.single_shot),
                            passive,
                        ])
                        .map_err(|e| CliError::Runtime(e.to_string()))?;
                    println!(
                        "T = {horizon:<3} sigma_b_sq = {sigma_b:<10} power = {power:<8} best cost = {:.9}",
                        report.best_cost
                    );
                }
            }
        }
        writer
            .flush()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }

    let out = common.out.join("sweep.csv");
    crate::formats::write_atomic(&out, &table)?;
    println!("table: {}", out.display());
    Ok(())
}
