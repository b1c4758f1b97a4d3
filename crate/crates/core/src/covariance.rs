//! Deterministic covariance propagation: the unconditional joint covariance,
//! the receiver's conditional (Kalman) covariance on the observed state, and
//! a batch linear-MMSE oracle used to verify the recursion.
//!
//! Per step `t` the orchestration is: gains from the controller blocks of
//! the joint covariance, joint propagation, next-step gains, observed-state
//! assembly, Kalman predict and update. The observed state embeds the
//! channel output as its last coordinate, so the "measurement" is a state
//! selector and the update needs no matrix inversion.

use nalgebra::{DMatrix, Matrix2, RowSVector, SVector};

use crate::config::{CostVariant, SystemConfig};
use crate::error::Error;
use crate::linalg::{min_symmetric_eigenvalue, sym_pseudo_inverse, symmetrize};
use crate::model::{
    self, assemble_joint_transition, init_joint_cov, layout, noise_cov, step_gains,
    ControllerSchedule, MatP, MatQ, NoiseP, NoiseQ, Row3, StepGains,
};
use crate::{Result, P_DIM, Q_DIM};

pub type VecP = SVector<f64, P_DIM>;
pub type RowQ = RowSVector<f64, Q_DIM>;
/// Posterior covariance of the message pair.
pub type MsgCov = Matrix2<f64>;

/// One conditioning step of the receiver's covariance recursion.
#[derive(Debug, Clone)]
pub struct KalmanStep {
    /// Covariance of the observed state before conditioning on the newest
    /// channel output.
    pub predicted: MatP,
    /// Conditioning gain applied to the innovation.
    pub gain: VecP,
    /// Variance of the innovation; at least the forward noise variance.
    pub innovation_var: f64,
}

/// The full deterministic trajectory induced by a schedule: joint
/// covariances, conditional covariances, realized gains, and terminal cost.
#[derive(Debug, Clone)]
pub struct CovTrajectory {
    /// Joint covariances at t = 0..=T (one more than the horizon; the last
    /// entry is the state after the final controller update).
    pub sigma_q: Vec<MatQ>,
    /// Conditional covariances given the outputs observed so far,
    /// t = 0..T-1.
    pub sigma_r: Vec<MatP>,
    /// Transmit gains per step, t = 0..T-1.
    pub gains: Vec<StepGains>,
    /// Conditioning steps, aligned with `sigma_r`.
    pub kalman: Vec<KalmanStep>,
    pub terminal_cost: f64,
}

impl CovTrajectory {
    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    /// Conditional message variances at step `t`.
    pub fn message_variances(&self, t: usize) -> (f64, f64) {
        let s = &self.sigma_r[t];
        (s[(layout::M1, layout::M1)], s[(layout::M2, layout::M2)])
    }

    /// Final conditional covariance of the message pair.
    pub fn terminal_msg_cov(&self) -> MsgCov {
        let s = self.sigma_r.last().expect("horizon >= 1");
        MsgCov::new(
            s[(layout::M1, layout::M1)],
            s[(layout::M1, layout::M2)],
            s[(layout::M2, layout::M1)],
            s[(layout::M2, layout::M2)],
        )
    }

    /// Check every structural invariant of the stored trajectory, returning
    /// a list of violations (empty when clean).
    pub fn invariant_violations(&self, config: &SystemConfig) -> Vec<String> {
        let mut issues = Vec::new();
        for (t, s) in self.sigma_q.iter().enumerate() {
            let trace: f64 = s.diagonal().iter().sum();
            if crate::linalg::max_asymmetry(s) > 1e-9 {
                issues.push(format!("sigma_q[{t}] asymmetric"));
            }
            if min_symmetric_eigenvalue(s) < -1e-9 * trace.max(1.0) {
                issues.push(format!("sigma_q[{t}] not PSD"));
            }
        }
        let mut prev: Option<(f64, f64)> = None;
        for (t, s) in self.sigma_r.iter().enumerate() {
            let trace: f64 = s.diagonal().iter().sum();
            if crate::linalg::max_asymmetry(s) > 1e-9 {
                issues.push(format!("sigma_r[{t}] asymmetric"));
            }
            if min_symmetric_eigenvalue(s) < -1e-9 * trace.max(1.0) {
                issues.push(format!("sigma_r[{t}] not PSD"));
            }
            for k in 0..P_DIM {
                if s[(layout::YR, k)].abs() > 1e-9 || s[(k, layout::YR)].abs() > 1e-9 {
                    issues.push(format!("sigma_r[{t}] has nonzero channel-output row/column"));
                    break;
                }
            }
            let (v1, v2) = self.message_variances(t);
            if let Some((p1, p2)) = prev {
                if v1 > p1 + 1e-9 || v2 > p2 + 1e-9 {
                    issues.push(format!("message variance increased at step {t}"));
                }
            }
            prev = Some((v1, v2));
        }
        for (t, k) in self.kalman.iter().enumerate() {
            if k.innovation_var < config.sigma_f_sq - 1e-9 {
                issues.push(format!(
                    "innovation variance {} below forward noise at step {t}",
                    k.innovation_var
                ));
            }
        }
        issues
    }
}

/// Propagate the joint covariance one step:
/// `Sigma' = A Sigma A' + J W J'`, symmetrized.
pub fn propagate_joint(sigma_q: &MatQ, a: &MatQ, j: &NoiseQ, config: &SystemConfig) -> MatQ {
    let w = noise_cov(config);
    symmetrize(&(a * sigma_q * a.transpose() + j * w * j.transpose()))
}

/// Assemble the observed-state transition `p_{t+1} = A p_t + J w` with noise
/// columns ordered as the step-t feedback noises then the next forward
/// noise.
///
/// The channel output observed at `t` feeds the receiver's controller
/// through coordinate `YR` of the state, which is how the correlation
/// between the observation noise and the receiver's state update is
/// captured. The new output row composes the sender-state rows with the
/// next-step transmit gains.
pub fn assemble_p_transition(
    schedule: &ControllerSchedule,
    t: usize,
    gains_t: &StepGains,
    d1_next: &Row3,
    d2_next: &Row3,
) -> (MatP, NoiseP) {
    use layout::{M1, M2, U1, U2, UR, YR};
    let step = &schedule.steps[t];
    let b1 = step.g1.b.unwrap_or_default();
    let b2 = step.g2.b.unwrap_or_default();
    let dr = &gains_t.dr.d;

    let mut a = MatP::zeros();
    a[(M1, M1)] = 1.0;
    a[(M2, M2)] = 1.0;
    a.fixed_view_mut::<3, 1>(U1, M1).copy_from(&b1);
    a.fixed_view_mut::<3, 3>(U1, U1).copy_from(&step.g1.a);
    a.fixed_view_mut::<3, 3>(U1, UR).copy_from(&(step.g1.c * dr));
    a.fixed_view_mut::<3, 1>(U2, M2).copy_from(&b2);
    a.fixed_view_mut::<3, 3>(U2, U2).copy_from(&step.g2.a);
    a.fixed_view_mut::<3, 3>(U2, UR).copy_from(&(step.g2.c * dr));
    a.fixed_view_mut::<3, 3>(UR, UR).copy_from(&step.gr.a);
    a.fixed_view_mut::<3, 1>(UR, YR).copy_from(&step.gr.c);

    let mut j = NoiseP::zeros();
    j.fixed_view_mut::<3, 1>(U1, 0).copy_from(&step.g1.c);
    j.fixed_view_mut::<3, 1>(U2, 1).copy_from(&step.g2.c);

    // y_{t+1} = d1' u1_{t+1} + d2' u2_{t+1} + w_f[t+1]: compose the freshly
    // filled sender rows.
    let u1_rows = a.fixed_view::<3, P_DIM>(U1, 0).into_owned();
    let u2_rows = a.fixed_view::<3, P_DIM>(U2, 0).into_owned();
    let y_row = d1_next * u1_rows + d2_next * u2_rows;
    a.fixed_view_mut::<1, P_DIM>(YR, 0).copy_from(&y_row);

    let ju1 = j.fixed_view::<3, 3>(U1, 0).into_owned();
    let ju2 = j.fixed_view::<3, 3>(U2, 0).into_owned();
    let mut y_noise = d1_next * ju1 + d2_next * ju2;
    y_noise[(0, 2)] += 1.0;
    j.fixed_view_mut::<1, 3>(YR, 0).copy_from(&y_noise);

    (a, j)
}

/// Condition an observed-state covariance on its embedded channel-output
/// coordinate. Returns the updated covariance (output row and column exactly
/// zero) together with the gain and innovation variance.
fn condition_on_output(sigma_p: &MatP, config: &SystemConfig) -> Result<(MatP, VecP, f64)> {
    let s = sigma_p[(layout::YR, layout::YR)];
    if s <= 0.0 {
        // Impossible when the forward noise variance is positive; means the
        // assembly dropped the fresh-noise term.
        return Err(Error::Internal(format!(
            "innovation variance {s} is not positive (sigma_f_sq = {})",
            config.sigma_f_sq
        )));
    }
    let gain: VecP = sigma_p.column(layout::YR) / s;
    // Joseph-style two-sided product keeps the result symmetric PSD; with
    // the optimal gain it coincides with (I - L C) Sigma.
    let mut ikc = MatP::identity();
    for r in 0..P_DIM {
        ikc[(r, layout::YR)] -= gain[r];
    }
    let updated = symmetrize(&(ikc * sigma_p * ikc.transpose()));
    Ok((updated, gain, s))
}

/// One Kalman step on the observed state: predict through `(A, J)` with the
/// full noise covariance, then condition on the new channel output.
pub fn kalman_update(
    sigma_r: &MatP,
    a: &MatP,
    j: &NoiseP,
    config: &SystemConfig,
) -> Result<(MatP, KalmanStep)> {
    let w = noise_cov(config);
    let predicted = symmetrize(&(a * sigma_r * a.transpose() + j * w * j.transpose()));
    let (updated, gain, innovation_var) = condition_on_output(&predicted, config)?;
    Ok((
        updated,
        KalmanStep {
            predicted,
            gain,
            innovation_var,
        },
    ))
}

/// Observation row mapping the joint state to the noiseless part of the
/// channel output.
fn output_row(d1: &Row3, d2: &Row3) -> RowQ {
    let mut row = RowQ::zeros();
    row.fixed_view_mut::<1, 3>(0, layout::U1).copy_from(d1);
    row.fixed_view_mut::<1, 3>(0, layout::U2).copy_from(d2);
    row
}

/// Covariance of the initial observed state: the initial joint covariance
/// extended with the first channel output.
fn init_observed_cov(sigma_q0: &MatQ, gains0: &StepGains, config: &SystemConfig) -> MatP {
    let row = output_row(&gains0.d1.d, &gains0.d2.d);
    let cross = sigma_q0 * row.transpose();
    let var = (row * sigma_q0 * row.transpose())[(0, 0)] + config.sigma_f_sq;
    let mut p0 = MatP::zeros();
    p0.fixed_view_mut::<Q_DIM, Q_DIM>(0, 0).copy_from(sigma_q0);
    p0.fixed_view_mut::<Q_DIM, 1>(0, layout::YR).copy_from(&cross);
    p0.fixed_view_mut::<1, Q_DIM>(layout::YR, 0)
        .copy_from(&cross.transpose());
    p0[(layout::YR, layout::YR)] = var;
    p0
}

/// Run the full deterministic recursion for a schedule: joint covariances,
/// per-step gains, the conditional covariance chain, and the terminal cost.
pub fn run_deterministic(schedule: &ControllerSchedule, config: &SystemConfig) -> Result<CovTrajectory> {
    config.validate()?;
    schedule.validate(config)?;
    let horizon = schedule.horizon();

    let mut sigma_q = Vec::with_capacity(horizon + 1);
    sigma_q.push(init_joint_cov(config));
    let mut gains = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let g = step_gains(&sigma_q[t], schedule, config, t)?;
        let (a, j) = assemble_joint_transition(schedule, t, &g.d1.d, &g.d2.d, &g.dr.d);
        sigma_q.push(propagate_joint(&sigma_q[t], &a, &j, config));
        gains.push(g);
    }

    let p0 = init_observed_cov(&sigma_q[0], &gains[0], config);
    let (s0, gain0, innov0) = condition_on_output(&p0, config)?;
    let mut sigma_r = vec![s0];
    let mut kalman = vec![KalmanStep {
        predicted: p0,
        gain: gain0,
        innovation_var: innov0,
    }];
    for t in 0..horizon - 1 {
        let (a, j) = assemble_p_transition(schedule, t, &gains[t], &gains[t + 1].d1.d, &gains[t + 1].d2.d);
        let (next, step) = kalman_update(&sigma_r[t], &a, &j, config)?;
        sigma_r.push(next);
        kalman.push(step);
    }

    let last = &sigma_r[horizon - 1];
    let v1 = last[(layout::M1, layout::M1)];
    let v2 = last[(layout::M2, layout::M2)];
    let terminal_cost = match config.cost_variant {
        CostVariant::SumVariance => v1 + v2,
        CostVariant::SumSquaredVariance => v1 * v1 + v2 * v2,
    };

    Ok(CovTrajectory {
        sigma_q,
        sigma_r,
        gains,
        kalman,
        terminal_cost,
    })
}

/// Posterior covariance of the message pair given all channel outputs,
/// computed by direct batch conditioning rather than the recursion.
///
/// Builds the joint covariance of (m1, m2, y_0, ..., y_{T-1}) by propagating
/// a coefficient map from the independent Gaussian primitives (messages and
/// all noises) and applies the Schur complement, with a pseudo-inverse when
/// the output covariance is singular.
pub fn batch_mmse_cov(schedule: &ControllerSchedule, config: &SystemConfig) -> Result<MsgCov> {
    config.validate()?;
    schedule.validate(config)?;
    let horizon = schedule.horizon();
    let n_prim = 2 + 3 * horizon;

    // Primitive variances: (m1, m2), then (w_b1, w_b2, w_f) per step.
    let mut prim_sd = Vec::with_capacity(n_prim);
    prim_sd.push(config.sigma_m1_sq.sqrt());
    prim_sd.push(config.sigma_m2_sq.sqrt());
    for _ in 0..horizon {
        prim_sd.push(config.sigma_b1_sq.sqrt());
        prim_sd.push(config.sigma_b2_sq.sqrt());
        prim_sd.push(config.sigma_f_sq.sqrt());
    }

    // Coefficient map from primitives to the joint state at time t.
    let mut phi = DMatrix::<f64>::zeros(Q_DIM, n_prim);
    phi[(layout::M1, 0)] = 1.0;
    phi[(layout::M2, 1)] = 1.0;
    phi[(layout::U1, 0)] = 1.0;
    phi[(layout::U2, 1)] = 1.0;

    let mut obs_rows: Vec<nalgebra::RowDVector<f64>> = Vec::with_capacity(horizon);
    for t in 0..horizon {
        // Joint covariance from the coefficient map; built as H H' with
        // H = phi * diag(sd) so it is symmetric by construction.
        let mut half = phi.clone();
        for (c, sd) in prim_sd.iter().enumerate() {
            half.column_mut(c).scale_mut(*sd);
        }
        let sigma_q_t = &half * half.transpose();
        let block_of = |off: usize| {
            model::Mat3::from_fn(|r, c| 0.5 * (sigma_q_t[(off + r, off + c)] + sigma_q_t[(off + c, off + r)]))
        };
        let g1 = model::compute_gain(
            &block_of(layout::U1),
            schedule.requested_power(config, model::Node::Sender1, t),
        )?;
        let g2 = model::compute_gain(
            &block_of(layout::U2),
            schedule.requested_power(config, model::Node::Sender2, t),
        )?;
        let gr = model::compute_gain(
            &block_of(layout::UR),
            schedule.requested_power(config, model::Node::Receiver, t),
        )?;

        // y_t = d1 u1_t + d2 u2_t + w_f[t], as a row over the primitives.
        let row_state = output_row(&g1.d, &g2.d);
        let mut obs = nalgebra::RowDVector::<f64>::zeros(n_prim);
        for i in 0..Q_DIM {
            if row_state[i] != 0.0 {
                obs += phi.row(i) * row_state[i];
            }
        }
        obs[2 + 3 * t + 2] += 1.0;
        obs_rows.push(obs);

        let (a, j) = assemble_joint_transition(schedule, t, &g1.d, &g2.d, &gr.d);
        let mut next = DMatrix::<f64>::zeros(Q_DIM, n_prim);
        for r in 0..Q_DIM {
            for c in 0..Q_DIM {
                let coeff = a[(r, c)];
                if coeff != 0.0 {
                    for k in 0..n_prim {
                        next[(r, k)] += coeff * phi[(c, k)];
                    }
                }
            }
            for k in 0..3 {
                if j[(r, k)] != 0.0 {
                    next[(r, 2 + 3 * t + k)] += j[(r, k)];
                }
            }
        }
        phi = next;
    }

    // Stack (m1, m2, y_0..y_{T-1}) over the primitives and form its
    // covariance, again as H H'.
    let mut stacked = DMatrix::<f64>::zeros(2 + horizon, n_prim);
    stacked[(0, 0)] = 1.0;
    stacked[(1, 1)] = 1.0;
    for (i, row) in obs_rows.iter().enumerate() {
        stacked.row_mut(2 + i).copy_from(row);
    }
    for (c, sd) in prim_sd.iter().enumerate() {
        stacked.column_mut(c).scale_mut(*sd);
    }
    let joint = &stacked * stacked.transpose();

    let sigma_mm = joint.view((0, 0), (2, 2)).into_owned();
    let sigma_my = joint.view((0, 2), (2, horizon)).into_owned();
    let sigma_yy = joint.view((2, 2), (horizon, horizon)).into_owned();
    let posterior = &sigma_mm - &sigma_my * sym_pseudo_inverse(&sigma_yy) * sigma_my.transpose();
    Ok(MsgCov::new(
        posterior[(0, 0)],
        posterior[(0, 1)],
        posterior[(1, 0)],
        posterior[(1, 1)],
    ))
}
