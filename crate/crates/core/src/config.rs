//! System-level configuration: horizon, noise levels, priors, and power
//! budgets.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// How transmit power is constrained across the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    /// Every node transmits at `P / T` in each slot.
    Instantaneous,
    /// Each node splits its budget `P` across slots via allocation fractions.
    Total,
}

/// Terminal cost read off the final conditional message covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostVariant {
    /// Sum of the two conditional message variances.
    SumVariance,
    /// Sum of the squared conditional message variances.
    SumSquaredVariance,
}

/// Fixed parameters of one transmission problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of channel uses.
    pub horizon: usize,
    /// Forward channel noise variance; must be strictly positive.
    pub sigma_f_sq: f64,
    /// Feedback noise variance seen by sender 1.
    pub sigma_b1_sq: f64,
    /// Feedback noise variance seen by sender 2.
    pub sigma_b2_sq: f64,
    /// Prior variance of sender 1's message.
    pub sigma_m1_sq: f64,
    /// Prior variance of sender 2's message.
    pub sigma_m2_sq: f64,
    /// Power budget of sender 1.
    pub p1: f64,
    /// Power budget of sender 2.
    pub p2: f64,
    /// Power budget of the receiver's feedback transmissions.
    pub pr: f64,
    pub power_mode: PowerMode,
    pub cost_variant: CostVariant,
    /// Box bound on controller parameter magnitudes; keeps the search
    /// well-scaled without excluding optima up to gauge freedom.
    #[serde(default = "default_param_box")]
    pub param_box: f64,
}

fn default_param_box() -> f64 {
    10.0
}

impl SystemConfig {
    /// A unit-scale config: unit priors, unit forward and feedback noise,
    /// unit power budgets, instantaneous power, sum-of-variances cost.
    pub fn unit(horizon: usize) -> Self {
        SystemConfig {
            horizon,
            sigma_f_sq: 1.0,
            sigma_b1_sq: 1.0,
            sigma_b2_sq: 1.0,
            sigma_m1_sq: 1.0,
            sigma_m2_sq: 1.0,
            p1: 1.0,
            p2: 1.0,
            pr: 1.0,
            power_mode: PowerMode::Instantaneous,
            cost_variant: CostVariant::SumVariance,
            param_box: default_param_box(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.horizon < 1 {
            return bad("horizon must be at least 1");
        }
        if !self.sigma_f_sq.is_finite() || self.sigma_f_sq <= 0.0 {
            return bad("sigma_f_sq must be finite and > 0");
        }
        for (name, v) in [
            ("sigma_b1_sq", self.sigma_b1_sq),
            ("sigma_b2_sq", self.sigma_b2_sq),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0"
                )));
            }
        }
        for (name, v) in [
            ("sigma_m1_sq", self.sigma_m1_sq),
            ("sigma_m2_sq", self.sigma_m2_sq),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and > 0"
                )));
            }
        }
        for (name, v) in [("p1", self.p1), ("p2", self.p2), ("pr", self.pr)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0"
                )));
            }
        }
        if !self.param_box.is_finite() || self.param_box <= 0.0 {
            return bad("param_box must be finite and > 0");
        }
        Ok(())
    }

    /// Slot power of a node under the instantaneous constraint.
    pub fn slot_power(&self, budget: f64) -> f64 {
        budget / self.horizon as f64
    }
}
