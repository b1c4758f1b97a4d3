//! Domain types, the fixed state-index layout, power-normalized transmit
//! gains, and assembly of the time-varying system matrices.
//!
//! The joint state stacks both messages and all three controller states:
//! `q = (m1, m2, u1, u2, ur)`, dimension 11. The receiver-observed state
//! appends the channel output: `p = (q, yr)`, dimension 12. All matrix
//! assembly and all reported entries use this layout.

use nalgebra::{Matrix3, RowVector3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::config::{PowerMode, SystemConfig};
use crate::error::Error;
use crate::linalg::{symmetrize, PsdDecomposition};
use crate::{Result, CONTROLLER_DIM, P_DIM, Q_DIM};

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;
pub type Row3 = RowVector3<f64>;
pub type MatQ = SMatrix<f64, Q_DIM, Q_DIM>;
pub type MatP = SMatrix<f64, P_DIM, P_DIM>;
/// Noise-injection matrix for the joint state; columns are ordered
/// (w_b1, w_b2, w_f).
pub type NoiseQ = SMatrix<f64, Q_DIM, 3>;
/// Noise-injection matrix for the observed state; columns are ordered
/// (step-t feedback noises, then the next forward noise).
pub type NoiseP = SMatrix<f64, P_DIM, 3>;

/// State-index layout; every assembled matrix and every reported entry uses
/// these coordinates. Indices are 0-based, so the message variances sit at
/// (0,0) and (1,1).
pub mod layout {
    /// Message of sender 1.
    pub const M1: usize = 0;
    /// Message of sender 2.
    pub const M2: usize = 1;
    /// First coordinate of sender 1's controller state.
    pub const U1: usize = 2;
    /// First coordinate of sender 2's controller state.
    pub const U2: usize = 5;
    /// First coordinate of the receiver's controller state.
    pub const UR: usize = 8;
    /// Embedded channel output in the observed state.
    pub const YR: usize = 11;
}

/// One of the three coding nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Sender1,
    Sender2,
    Receiver,
}

pub const NODES: [Node; 3] = [Node::Sender1, Node::Sender2, Node::Receiver];

impl Node {
    /// Offset of this node's controller block in the joint state.
    pub fn u_offset(self) -> usize {
        match self {
            Node::Sender1 => layout::U1,
            Node::Sender2 => layout::U2,
            Node::Receiver => layout::UR,
        }
    }

    /// This node's power budget.
    pub fn budget(self, config: &SystemConfig) -> f64 {
        match self {
            Node::Sender1 => config.p1,
            Node::Sender2 => config.p2,
            Node::Receiver => config.pr,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Node::Sender1 => "sender1",
            Node::Sender2 => "sender2",
            Node::Receiver => "receiver",
        }
    }
}

/// Linear controller update parameters for one node at one step.
///
/// The update is `u' = a u + b m + c y`; the message feed `b` exists only at
/// the senders.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    pub a: Mat3,
    pub b: Option<Vec3>,
    pub c: Vec3,
}

impl ControllerParams {
    pub fn sender(a: Mat3, b: Vec3, c: Vec3) -> Self {
        ControllerParams { a, b: Some(b), c }
    }

    pub fn receiver(a: Mat3, c: Vec3) -> Self {
        ControllerParams { a, b: None, c }
    }

    pub fn zero_sender() -> Self {
        Self::sender(Mat3::zeros(), Vec3::zeros(), Vec3::zeros())
    }

    pub fn zero_receiver() -> Self {
        Self::receiver(Mat3::zeros(), Vec3::zeros())
    }

    fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.a
            .iter()
            .copied()
            .chain(self.b.iter().flat_map(|b| b.iter().copied()))
            .chain(self.c.iter().copied())
    }

    /// Conjugate by a coordinate permutation of the controller state:
    /// `a -> P a P'`, `b -> P b`, `c -> P c`.
    ///
    /// Transmitted signals (and hence the cost) are unchanged whenever the
    /// permutation fixes the node's initial state: any permutation for the
    /// receiver (which starts at zero), permutations fixing the first
    /// coordinate for a sender (which starts at `(m, 0, 0)`).
    pub fn conjugate(&self, perm: &Mat3) -> Self {
        ControllerParams {
            a: perm * self.a * perm.transpose(),
            b: self.b.map(|b| perm * b),
            c: perm * self.c,
        }
    }
}

/// Controller parameters for all three nodes at one step, plus the power
/// allocation fractions used in total mode.
#[derive(Debug, Clone, PartialEq)]
pub struct StepParams {
    pub g1: ControllerParams,
    pub g2: ControllerParams,
    pub gr: ControllerParams,
    pub rho1: f64,
    pub rho2: f64,
    pub rhor: f64,
}

impl StepParams {
    pub fn node(&self, node: Node) -> &ControllerParams {
        match node {
            Node::Sender1 => &self.g1,
            Node::Sender2 => &self.g2,
            Node::Receiver => &self.gr,
        }
    }

    pub fn node_mut(&mut self, node: Node) -> &mut ControllerParams {
        match node {
            Node::Sender1 => &mut self.g1,
            Node::Sender2 => &mut self.g2,
            Node::Receiver => &mut self.gr,
        }
    }

    pub fn rho(&self, node: Node) -> f64 {
        match node {
            Node::Sender1 => self.rho1,
            Node::Sender2 => self.rho2,
            Node::Receiver => self.rhor,
        }
    }

    pub fn rho_mut(&mut self, node: Node) -> &mut f64 {
        match node {
            Node::Sender1 => &mut self.rho1,
            Node::Sender2 => &mut self.rho2,
            Node::Receiver => &mut self.rhor,
        }
    }
}

/// A complete controller schedule over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSchedule {
    pub steps: Vec<StepParams>,
    /// When set, optimizers keep the receiver's parameters and allocation
    /// fixed (passive-feedback mode).
    pub receiver_frozen: bool,
}

impl ControllerSchedule {
    /// Uniform-fraction schedule with every controller parameter zero.
    /// Only the initial controller seeding transmits anything.
    pub fn zeroed(horizon: usize) -> Self {
        let rho = 1.0 / horizon as f64;
        ControllerSchedule {
            steps: (0..horizon)
                .map(|_| StepParams {
                    g1: ControllerParams::zero_sender(),
                    g2: ControllerParams::zero_sender(),
                    gr: ControllerParams::zero_receiver(),
                    rho1: rho,
                    rho2: rho,
                    rhor: rho,
                })
                .collect(),
            receiver_frozen: false,
        }
    }

    /// The no-feedback repetition schedule: every controller holds its state
    /// (`a = I`, `b = c = 0`), so each sender retransmits its seeded message
    /// every slot and the receiver's state stays at zero.
    pub fn repetition(horizon: usize) -> Self {
        let mut s = Self::zeroed(horizon);
        for step in &mut s.steps {
            step.g1.a = Mat3::identity();
            step.g2.a = Mat3::identity();
            step.gr.a = Mat3::identity();
        }
        s
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Requested transmit power of `node` at step `t` under the configured
    /// power mode.
    pub fn requested_power(&self, config: &SystemConfig, node: Node, t: usize) -> f64 {
        let budget = node.budget(config);
        match config.power_mode {
            PowerMode::Instantaneous => budget / self.horizon() as f64,
            PowerMode::Total => self.steps[t].rho(node) * budget,
        }
    }

    /// Apply a permutation-conjugation gauge transformation to one node's
    /// parameters at every step.
    pub fn conjugate_node(&mut self, node: Node, perm: &Mat3) {
        for step in &mut self.steps {
            let g = step.node_mut(node);
            *g = g.conjugate(perm);
        }
    }

    /// Validate against a config: length, finiteness, the parameter box and
    /// the power-fraction constraints of the configured mode.
    pub fn validate(&self, config: &SystemConfig) -> Result<()> {
        let mut issues = Vec::new();
        if self.steps.len() != config.horizon {
            issues.push(format!(
                "schedule has {} steps, config horizon is {}",
                self.steps.len(),
                config.horizon
            ));
        }
        let bound = config.param_box;
        for (t, step) in self.steps.iter().enumerate() {
            for node in NODES {
                let g = step.node(node);
                if node == Node::Receiver && g.b.is_some() {
                    issues.push(format!("step {t}: receiver must not carry a message feed b"));
                }
                if node != Node::Receiver && g.b.is_none() {
                    issues.push(format!(
                        "step {t}: {} is missing its message feed b",
                        node.label()
                    ));
                }
                for v in g.entries() {
                    if !v.is_finite() {
                        issues.push(format!("step {t}: {} has a non-finite entry", node.label()));
                        break;
                    }
                }
                if g.entries().any(|v| v.abs() > bound) {
                    issues.push(format!(
                        "step {t}: {} has an entry outside the box |v| <= {bound}",
                        node.label()
                    ));
                }
                let rho = step.rho(node);
                if !rho.is_finite() || rho < 0.0 {
                    issues.push(format!(
                        "step {t}: {} power fraction {rho} is negative or non-finite",
                        node.label()
                    ));
                }
                if config.power_mode == PowerMode::Instantaneous {
                    let uniform = 1.0 / self.steps.len().max(1) as f64;
                    if (rho - uniform).abs() > 1e-9 {
                        issues.push(format!(
                            "step {t}: {} power fraction {rho} must equal 1/T = {uniform} in instantaneous mode",
                            node.label()
                        ));
                    }
                }
            }
        }
        if config.power_mode == PowerMode::Total {
            for node in NODES {
                let total: f64 = self.steps.iter().map(|s| s.rho(node)).sum();
                if (total - 1.0).abs() > 1e-9 {
                    let listed: Vec<String> = self
                        .steps
                        .iter()
                        .enumerate()
                        .map(|(t, s)| format!("step {t}: {}", s.rho(node)))
                        .collect();
                    issues.push(format!(
                        "{} power fractions sum to {total}, expected 1 ({})",
                        node.label(),
                        listed.join(", ")
                    ));
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSchedule { issues })
        }
    }
}

/// Power-normalized transmit gain of one node at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Gain {
    /// Row vector mapping the controller state to the transmitted scalar.
    pub d: Row3,
    /// Realized transmit power `d * Sigma_u * d'`. Equals the requested
    /// power unless the fixed direction has no component in the range of
    /// `Sigma_u`, in which case it is zero.
    pub achieved_power: f64,
}

impl Gain {
    pub fn zero() -> Self {
        Gain {
            d: Row3::zeros(),
            achieved_power: 0.0,
        }
    }
}

/// Threshold on `|Pi 1|^2` (range projector applied to the fixed direction)
/// below which the transmit direction is treated as vanished.
const DIRECTION_VANISH_TOL: f64 = 1e-12 * CONTROLLER_DIM as f64;

/// Compute the transmit gain `d = sqrt(P/3) * [1 1 1] * Sigma_u^{-1/2}`
/// realizing `d Sigma_u d' = P`.
///
/// Uses the unique symmetric PSD square root, with the pseudo-inverse on
/// singular input. The unnormalized direction `[1 1 1] Sigma_u^{+1/2}` is
/// rescaled to hit the requested power exactly, which also absorbs the
/// eigensolver error on badly conditioned full-rank input. If the fixed
/// direction has no component in the range of `Sigma_u`, the gain is zero.
pub fn compute_gain(sigma_u: &Mat3, p_t: f64) -> Result<Gain> {
    if !p_t.is_finite() || p_t < 0.0 {
        return Err(Error::non_finite("requested power"));
    }
    let dec = PsdDecomposition::new(sigma_u)?;
    let sym = symmetrize(sigma_u);
    let ones = Row3::repeat(1.0);
    let direction = ones * dec.inv_sqrt_pseudo();
    // Equals |Pi 1|^2 for the range projector Pi, so it is scale-free and
    // lies in [0, 3] up to floating error.
    let quad = (direction * sym * direction.transpose())[(0, 0)];
    if quad <= DIRECTION_VANISH_TOL {
        return Ok(Gain::zero());
    }
    let d = direction * (p_t / quad).sqrt();
    let achieved = (d * sym * d.transpose())[(0, 0)].max(0.0);
    Ok(Gain {
        d,
        achieved_power: achieved,
    })
}

/// Per-step transmit gains of all three nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGains {
    pub d1: Gain,
    pub d2: Gain,
    pub dr: Gain,
}

/// Compute all three gains at step `t` from the controller blocks of the
/// joint covariance.
pub fn step_gains(
    sigma_q: &MatQ,
    schedule: &ControllerSchedule,
    config: &SystemConfig,
    t: usize,
) -> Result<StepGains> {
    let gain_for = |node: Node| -> Result<Gain> {
        let off = node.u_offset();
        let block: Mat3 = sigma_q.fixed_view::<3, 3>(off, off).into_owned();
        compute_gain(&symmetrize(&block), schedule.requested_power(config, node, t))
    };
    Ok(StepGains {
        d1: gain_for(Node::Sender1)?,
        d2: gain_for(Node::Sender2)?,
        dr: gain_for(Node::Receiver)?,
    })
}

/// Assemble the joint-state transition `q_{t+1} = A q_t + J w_t` from the
/// primitive controller update equations, with noise columns ordered
/// (w_b1, w_b2, w_f).
pub fn assemble_joint_transition(
    schedule: &ControllerSchedule,
    t: usize,
    d1: &Row3,
    d2: &Row3,
    dr: &Row3,
) -> (MatQ, NoiseQ) {
    use layout::{M1, M2, U1, U2, UR};
    let step = &schedule.steps[t];
    let b1 = step.g1.b.unwrap_or_else(Vec3::zeros);
    let b2 = step.g2.b.unwrap_or_else(Vec3::zeros);

    let mut a = MatQ::zeros();
    a[(M1, M1)] = 1.0;
    a[(M2, M2)] = 1.0;
    // u1' = a1 u1 + b1 m1 + c1 (dr ur) + c1 w_b1
    a.fixed_view_mut::<3, 1>(U1, M1).copy_from(&b1);
    a.fixed_view_mut::<3, 3>(U1, U1).copy_from(&step.g1.a);
    a.fixed_view_mut::<3, 3>(U1, UR).copy_from(&(step.g1.c * dr));
    // u2' = a2 u2 + b2 m2 + c2 (dr ur) + c2 w_b2
    a.fixed_view_mut::<3, 1>(U2, M2).copy_from(&b2);
    a.fixed_view_mut::<3, 3>(U2, U2).copy_from(&step.g2.a);
    a.fixed_view_mut::<3, 3>(U2, UR).copy_from(&(step.g2.c * dr));
    // ur' = ar ur + cr (d1 u1 + d2 u2 + w_f)
    a.fixed_view_mut::<3, 3>(UR, U1).copy_from(&(step.gr.c * d1));
    a.fixed_view_mut::<3, 3>(UR, U2).copy_from(&(step.gr.c * d2));
    a.fixed_view_mut::<3, 3>(UR, UR).copy_from(&step.gr.a);

    let mut j = NoiseQ::zeros();
    j.fixed_view_mut::<3, 1>(U1, 0).copy_from(&step.g1.c);
    j.fixed_view_mut::<3, 1>(U2, 1).copy_from(&step.g2.c);
    j.fixed_view_mut::<3, 1>(UR, 2).copy_from(&step.gr.c);
    (a, j)
}

/// Covariance of the noise vector (w_b1, w_b2, w_f).
pub fn noise_cov(config: &SystemConfig) -> Mat3 {
    Mat3::from_diagonal(&Vec3::new(
        config.sigma_b1_sq,
        config.sigma_b2_sq,
        config.sigma_f_sq,
    ))
}

/// Exact covariance of the initial joint state under the seeding
/// `u1_0 = (m1, 0, 0)`, `u2_0 = (m2, 0, 0)`, `ur_0 = 0`.
///
/// The seeding forces the cross terms between each message and the first
/// coordinate of its sender's controller state.
pub fn init_joint_cov(config: &SystemConfig) -> MatQ {
    use layout::{M1, M2, U1, U2};
    let mut s = MatQ::zeros();
    s[(M1, M1)] = config.sigma_m1_sq;
    s[(U1, U1)] = config.sigma_m1_sq;
    s[(M1, U1)] = config.sigma_m1_sq;
    s[(U1, M1)] = config.sigma_m1_sq;
    s[(M2, M2)] = config.sigma_m2_sq;
    s[(U2, U2)] = config.sigma_m2_sq;
    s[(M2, U2)] = config.sigma_m2_sq;
    s[(U2, M2)] = config.sigma_m2_sq;
    s
}
