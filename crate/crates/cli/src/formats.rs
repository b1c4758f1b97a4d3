//! File formats: JSON configs, schedules, and reports, plus atomic writes.
//!
//! Field names mirror the model symbols (`sigma_f_sq`, `a1`, `b1`, `c1`,
//! ...); matrices are row-major nested arrays. Unknown keys are rejected so
//! typos fail loudly instead of silently falling back to defaults.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use macfb_core::covariance::CovTrajectory;
use macfb_core::model::{ControllerParams, ControllerSchedule, Mat3, StepParams, Vec3};
use macfb_core::optimize::{AnalyticBaselines, OptimizationReport};
use macfb_core::simulate::McReport;
use macfb_core::{CostVariant, PowerMode, SystemConfig};

use crate::CliError;

/// One experiment description: the system parameters plus optional
/// command knobs. Flags override file values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: usize,
    pub sigma_f_sq: f64,
    pub sigma_b1_sq: f64,
    pub sigma_b2_sq: f64,
    pub sigma_m1_sq: f64,
    pub sigma_m2_sq: f64,
    pub p1: f64,
    pub p2: f64,
    pub pr: f64,
    #[serde(default = "default_power_mode")]
    pub power_mode: PowerMode,
    #[serde(default = "default_cost_variant")]
    pub cost_variant: CostVariant,
    #[serde(default = "default_param_box")]
    pub param_box: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passive: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
}

fn default_power_mode() -> PowerMode {
    PowerMode::Instantaneous
}

fn default_cost_variant() -> CostVariant {
    CostVariant::SumVariance
}

fn default_param_box() -> f64 {
    10.0
}

/// Grid axes for the sweep command. Omitted axes use the base config value;
/// explicitly empty axes are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizons: Option<Vec<usize>>,
    /// Applied to both feedback channels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_b_sqs: Option<Vec<f64>>,
    /// Applied to both sender budgets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub powers: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn to_system(&self) -> SystemConfig {
        SystemConfig {
            horizon: self.horizon,
            sigma_f_sq: self.sigma_f_sq,
            sigma_b1_sq: self.sigma_b1_sq,
            sigma_b2_sq: self.sigma_b2_sq,
            sigma_m1_sq: self.sigma_m1_sq,
            sigma_m2_sq: self.sigma_m2_sq,
            p1: self.p1,
            p2: self.p2,
            pr: self.pr,
            power_mode: self.power_mode,
            cost_variant: self.cost_variant,
            param_box: self.param_box,
        }
    }
}

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    #[serde(default)]
    pub receiver_frozen: bool,
    pub steps: Vec<ScheduleStep>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleStep {
    pub a1: [[f64; 3]; 3],
    pub b1: [f64; 3],
    pub c1: [f64; 3],
    pub a2: [[f64; 3]; 3],
    pub b2: [f64; 3],
    pub c2: [f64; 3],
    pub ar: [[f64; 3]; 3],
    pub cr: [f64; 3],
    /// Power fractions; omitted fractions default to the uniform 1/T.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhor: Option<f64>,
}

fn mat_to_rows(m: &Mat3) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
    out
}

fn rows_to_mat(rows: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|r, c| rows[r][c])
}

impl ScheduleFile {
    pub fn from_schedule(schedule: &ControllerSchedule) -> Self {
        ScheduleFile {
            receiver_frozen: schedule.receiver_frozen,
            steps: schedule
                .steps
                .iter()
                .map(|s| ScheduleStep {
                    a1: mat_to_rows(&s.g1.a),
                    b1: s.g1.b.unwrap_or_default().into(),
                    c1: s.g1.c.into(),
                    a2: mat_to_rows(&s.g2.a),
                    b2: s.g2.b.unwrap_or_default().into(),
                    c2: s.g2.c.into(),
                    ar: mat_to_rows(&s.gr.a),
                    cr: s.gr.c.into(),
                    rho1: Some(s.rho1),
                    rho2: Some(s.rho2),
                    rhor: Some(s.rhor),
                })
                .collect(),
        }
    }

    pub fn to_schedule(&self) -> ControllerSchedule {
        let horizon = self.steps.len().max(1);
        let uniform = 1.0 / horizon as f64;
        ControllerSchedule {
            receiver_frozen: self.receiver_frozen,
            steps: self
                .steps
                .iter()
                .map(|s| StepParams {
                    g1: ControllerParams::sender(
                        rows_to_mat(&s.a1),
                        Vec3::from(s.b1),
                        Vec3::from(s.c1),
                    ),
                    g2: ControllerParams::sender(
                        rows_to_mat(&s.a2),
                        Vec3::from(s.b2),
                        Vec3::from(s.c2),
                    ),
                    gr: ControllerParams::receiver(rows_to_mat(&s.ar), Vec3::from(s.cr)),
                    rho1: s.rho1.unwrap_or(uniform),
                    rho2: s.rho2.unwrap_or(uniform),
                    rhor: s.rhor.unwrap_or(uniform),
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateReport {
    pub terminal_cost: f64,
    pub cost_variant: CostVariant,
    pub power_mode: PowerMode,
    pub per_step: Vec<StepReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub t: usize,
    pub msg1_var: f64,
    pub msg2_var: f64,
    pub power1: f64,
    pub power2: f64,
    pub powerr: f64,
}

impl EvaluateReport {
    pub fn from_trajectory(traj: &CovTrajectory, config: &SystemConfig) -> Self {
        let per_step = (0..traj.horizon())
            .map(|t| {
                let (v1, v2) = traj.message_variances(t);
                let g = &traj.gains[t];
                StepReport {
                    t,
                    msg1_var: v1,
                    msg2_var: v2,
                    power1: g.d1.achieved_power,
                    power2: g.d2.achieved_power,
                    powerr: g.dr.achieved_power,
                }
            })
            .collect();
        EvaluateReport {
            terminal_cost: traj.terminal_cost,
            cost_variant: config.cost_variant,
            power_mode: config.power_mode,
            per_step,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineReport {
    pub zero_power: f64,
    pub no_feedback_repetition: f64,
    pub single_shot: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passive: Option<f64>,
}

impl BaselineReport {
    pub fn new(b: &AnalyticBaselines, passive: Option<f64>) -> Self {
        BaselineReport {
            zero_power: b.zero_power,
            no_feedback_repetition: b.no_feedback_repetition,
            single_shot: b.single_shot,
            passive,
        }
    }
}

/// Serialized optimization outcome. Wall time is deliberately not part of
/// the body so identical runs emit identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct OptimizeReportFile {
    pub best_cost: f64,
    pub restarts: usize,
    pub eval_count: usize,
    pub seed: u64,
    pub budget: usize,
    pub baselines: BaselineReport,
    pub warm_start_costs: Vec<f64>,
    pub improvement_over_repetition: f64,
    pub cost_trace: Vec<f64>,
}

impl OptimizeReportFile {
    pub fn new(report: &OptimizationReport, seed: u64, budget: usize) -> Self {
        OptimizeReportFile {
            best_cost: report.best_cost,
            restarts: report.restarts,
            eval_count: report.eval_count,
            seed,
            budget,
            baselines: BaselineReport::new(&report.baselines, report.passive_cost),
            warm_start_costs: report.warm_start_costs.clone(),
            improvement_over_repetition: report.baselines.no_feedback_repetition
                - report.best_cost,
            cost_trace: report.cost_trace.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateReport {
    pub samples: usize,
    pub seed: u64,
    pub pass: bool,
    pub max_abs_z: f64,
    pub max_sigma_q_z: f64,
    pub max_power_z: f64,
    pub mse_z: f64,
    pub analytic_mse: f64,
    pub empirical_mse: f64,
    pub empirical_mse1: f64,
    pub empirical_mse2: f64,
    pub empirical_power: Vec<[f64; 3]>,
    pub power_z: Vec<[f64; 3]>,
    pub empirical_sigma_q: Vec<Vec<f64>>,
    pub sigma_q_z: Vec<Vec<f64>>,
}

impl ValidateReport {
    pub fn from_mc(report: &McReport) -> Self {
        let to_rows = |m: &macfb_core::model::MatQ| -> Vec<Vec<f64>> {
            (0..macfb_core::Q_DIM)
                .map(|r| (0..macfb_core::Q_DIM).map(|c| m[(r, c)]).collect())
                .collect()
        };
        ValidateReport {
            samples: report.samples,
            seed: report.seed,
            pass: report.pass,
            max_abs_z: report.max_abs_z,
            max_sigma_q_z: report.max_sigma_q_z,
            max_power_z: report.max_power_z,
            mse_z: report.mse_z,
            analytic_mse: report.analytic_mse,
            empirical_mse: report.empirical_mse,
            empirical_mse1: report.empirical_mse1,
            empirical_mse2: report.empirical_mse2,
            empirical_power: report.empirical_power.clone(),
            power_z: report.power_z.clone(),
            empirical_sigma_q: to_rows(&report.empirical_sigma_q),
            sigma_q_z: to_rows(&report.sigma_q_z),
        }
    }
}

// ---------------------------------------------------------------------------
// IO
// ---------------------------------------------------------------------------

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Write once, atomically: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp_path = std::path::PathBuf::from(tmp);
    fs::write(&tmp_path, bytes)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", tmp_path.display())))?;
    fs::rename(&tmp_path, path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
