//! Stochastic rollouts of the coding scheme and Monte Carlo validation of
//! the analytic covariances, powers, and terminal cost.
//!
//! Sampling is reproducible and parallelism-independent: each trajectory
//! draws from its own counter-indexed substream of the base seed, and Monte
//! Carlo accumulation reduces over fixed-size chunks in index order, so the
//! same `(seed, N)` produces bit-identical reports at any thread count.

use nalgebra::SVector;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::SystemConfig;
use crate::covariance::{assemble_p_transition, run_deterministic, CovTrajectory, VecP};
use crate::error::Error;
use crate::model::{layout, ControllerSchedule, MatP, MatQ, Row3, Vec3};
use crate::{Result, P_DIM, Q_DIM};

pub type VecQ = SVector<f64, Q_DIM>;

/// The receiver's running conditional mean over the observed state; its
/// last coordinate always equals the most recent channel output.
pub type EstimatorState = VecP;

/// Fixed chunk size for parallel accumulation. Chunk boundaries, not thread
/// scheduling, determine the floating-point reduction order.
const MC_CHUNK: usize = 1024;

/// All primitive randomness of one trajectory. Draw order is the messages
/// first, then (w_f, w_b1, w_b2) per step.
#[derive(Debug, Clone)]
pub struct NoiseDraws {
    pub m1: f64,
    pub m2: f64,
    pub w_f: Vec<f64>,
    pub w_b1: Vec<f64>,
    pub w_b2: Vec<f64>,
}

impl NoiseDraws {
    /// Degenerate draws with every noise and message zero; for exercising
    /// the deterministic part of the rollout.
    pub fn zeros(horizon: usize) -> Self {
        NoiseDraws {
            m1: 0.0,
            m2: 0.0,
            w_f: vec![0.0; horizon],
            w_b1: vec![0.0; horizon],
            w_b2: vec![0.0; horizon],
        }
    }

    pub fn sample(config: &SystemConfig, rng: &mut impl Rng) -> Self {
        let horizon = config.horizon;
        let mut normal = |sd: f64| -> f64 {
            let z: f64 = rng.sample(StandardNormal);
            sd * z
        };
        let m1 = normal(config.sigma_m1_sq.sqrt());
        let m2 = normal(config.sigma_m2_sq.sqrt());
        let sd_f = config.sigma_f_sq.sqrt();
        let sd_b1 = config.sigma_b1_sq.sqrt();
        let sd_b2 = config.sigma_b2_sq.sqrt();
        let mut w_f = Vec::with_capacity(horizon);
        let mut w_b1 = Vec::with_capacity(horizon);
        let mut w_b2 = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            w_f.push(normal(sd_f));
            w_b1.push(normal(sd_b1));
            w_b2.push(normal(sd_b2));
        }
        NoiseDraws {
            m1,
            m2,
            w_f,
            w_b1,
            w_b2,
        }
    }
}

/// Per-trajectory substream: the base seed keys the cipher, the trajectory
/// index selects the stream.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Controller update coefficients for one node at one step; the receiver's
/// message feed is zero.
struct NodeUpdate {
    a: crate::model::Mat3,
    b: Vec3,
    c: Vec3,
}

impl NodeUpdate {
    fn from_params(g: &crate::model::ControllerParams) -> Self {
        NodeUpdate {
            a: g.a,
            b: g.b.unwrap_or_default(),
            c: g.c,
        }
    }

    fn apply(&self, u: &Vec3, m: f64, y: f64) -> Vec3 {
        self.a * u + self.b * m + self.c * y
    }
}

/// Everything the per-trajectory rollout needs, precomputed once per
/// schedule: transmit gains, controller updates, and the estimator's
/// mean-update maps.
pub struct SimPlan {
    horizon: usize,
    d1: Vec<Row3>,
    d2: Vec<Row3>,
    dr: Vec<Row3>,
    updates: Vec<(NodeUpdate, NodeUpdate, NodeUpdate)>,
    /// Conditioning gains L_t, t = 0..T-1.
    gain: Vec<VecP>,
    /// (I - L_{t+1} C) A_t, t = 0..T-2; row YR is exactly zero.
    mean_map: Vec<MatP>,
}

impl SimPlan {
    pub fn new(
        schedule: &ControllerSchedule,
        config: &SystemConfig,
        analytic: &CovTrajectory,
    ) -> Self {
        let _ = config;
        let horizon = schedule.horizon();
        let d1: Vec<Row3> = analytic.gains.iter().map(|g| g.d1.d).collect();
        let d2: Vec<Row3> = analytic.gains.iter().map(|g| g.d2.d).collect();
        let dr: Vec<Row3> = analytic.gains.iter().map(|g| g.dr.d).collect();
        let updates = schedule
            .steps
            .iter()
            .map(|s| {
                (
                    NodeUpdate::from_params(&s.g1),
                    NodeUpdate::from_params(&s.g2),
                    NodeUpdate::from_params(&s.gr),
                )
            })
            .collect();
        let gain: Vec<VecP> = analytic.kalman.iter().map(|k| k.gain).collect();
        let mut mean_map = Vec::with_capacity(horizon.saturating_sub(1));
        for t in 0..horizon.saturating_sub(1) {
            let (a, _) =
                assemble_p_transition(schedule, t, &analytic.gains[t], &d1[t + 1], &d2[t + 1]);
            let mut ikc = MatP::identity();
            for r in 0..P_DIM {
                ikc[(r, layout::YR)] -= gain[t + 1][r];
            }
            mean_map.push(ikc * a);
        }
        SimPlan {
            horizon,
            d1,
            d2,
            dr,
            updates,
            gain,
            mean_map,
        }
    }
}

/// One realized run of the scheme, with the estimator tracked in lockstep.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub m1: f64,
    pub m2: f64,
    /// Controller states at t = 0..=T.
    pub u1: Vec<Vec3>,
    pub u2: Vec<Vec3>,
    pub ur: Vec<Vec3>,
    /// Transmissions and channel outputs at t = 0..T-1.
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub xr: Vec<f64>,
    pub yr: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub w_f: Vec<f64>,
    pub w_b1: Vec<f64>,
    pub w_b2: Vec<f64>,
    /// Conditional means after each observation, t = 0..T-1.
    pub mean: Vec<EstimatorState>,
    pub m1_hat: f64,
    pub m2_hat: f64,
}

/// Deterministic rollout from explicit primitive draws.
pub fn rollout(plan: &SimPlan, draws: &NoiseDraws) -> Trajectory {
    let horizon = plan.horizon;
    let m1 = draws.m1;
    let m2 = draws.m2;
    let mut u1 = vec![Vec3::new(m1, 0.0, 0.0)];
    let mut u2 = vec![Vec3::new(m2, 0.0, 0.0)];
    let mut ur = vec![Vec3::zeros()];
    let (mut x1, mut x2, mut xr) = (Vec::new(), Vec::new(), Vec::new());
    let (mut yr, mut y1, mut y2) = (Vec::new(), Vec::new(), Vec::new());
    let mut mean: Vec<EstimatorState> = Vec::with_capacity(horizon);

    for t in 0..horizon {
        let x1t = (plan.d1[t] * u1[t])[(0, 0)];
        let x2t = (plan.d2[t] * u2[t])[(0, 0)];
        let xrt = (plan.dr[t] * ur[t])[(0, 0)];
        let yrt = x1t + x2t + draws.w_f[t];
        let y1t = xrt + draws.w_b1[t];
        let y2t = xrt + draws.w_b2[t];
        x1.push(x1t);
        x2.push(x2t);
        xr.push(xrt);
        yr.push(yrt);
        y1.push(y1t);
        y2.push(y2t);

        let state = if t == 0 {
            plan.gain[0] * yrt
        } else {
            plan.mean_map[t - 1] * mean[t - 1] + plan.gain[t] * yrt
        };
        mean.push(state);

        u1.push(plan.u1_update(t, &u1[t], m1, y1t));
        u2.push(plan.u2_update(t, &u2[t], m2, y2t));
        ur.push(plan.ur_update(t, &ur[t], yrt));
    }

    let last = mean[horizon - 1];
    Trajectory {
        m1,
        m2,
        u1,
        u2,
        ur,
        x1,
        x2,
        xr,
        yr,
        y1,
        y2,
        w_f: draws.w_f.clone(),
        w_b1: draws.w_b1.clone(),
        w_b2: draws.w_b2.clone(),
        mean,
        m1_hat: last[layout::M1],
        m2_hat: last[layout::M2],
    }
}

/// Sample one trajectory from substream `index` of `seed`, running the mean
/// estimator in lockstep with the precomputed gains.
pub fn sample_trajectory(plan: &SimPlan, config: &SystemConfig, seed: u64, index: u64) -> Trajectory {
    let mut rng = trajectory_rng(seed, index);
    let draws = NoiseDraws::sample(config, &mut rng);
    rollout(plan, &draws)
}

/// Convenience wrapper: precompute the analytic trajectory and plan, then
/// sample a single run.
pub fn sample_one(
    schedule: &ControllerSchedule,
    config: &SystemConfig,
    seed: u64,
) -> Result<Trajectory> {
    let analytic = run_deterministic(schedule, config)?;
    let plan = SimPlan::new(schedule, config, &analytic);
    Ok(sample_trajectory(&plan, config, seed, 0))
}

impl SimPlan {
    fn u1_update(&self, t: usize, u: &Vec3, m: f64, y: f64) -> Vec3 {
        self.updates[t].0.apply(u, m, y)
    }

    fn u2_update(&self, t: usize, u: &Vec3, m: f64, y: f64) -> Vec3 {
        self.updates[t].1.apply(u, m, y)
    }

    fn ur_update(&self, t: usize, u: &Vec3, y: f64) -> Vec3 {
        self.updates[t].2.apply(u, 0.0, y)
    }
}

/// Empirical-versus-analytic comparison from one Monte Carlo batch.
#[derive(Debug, Clone)]
pub struct McReport {
    pub samples: usize,
    pub seed: u64,
    /// Empirical covariance of the terminal joint state.
    pub empirical_sigma_q: MatQ,
    /// Per-entry z-statistics of the terminal joint covariance.
    pub sigma_q_z: MatQ,
    pub max_sigma_q_z: f64,
    /// Empirical transmit power per step and node (sender1, sender2,
    /// receiver).
    pub empirical_power: Vec<[f64; 3]>,
    pub power_z: Vec<[f64; 3]>,
    pub max_power_z: f64,
    pub empirical_mse1: f64,
    pub empirical_mse2: f64,
    pub empirical_mse: f64,
    pub analytic_mse: f64,
    pub mse_z: f64,
    /// Largest |z| across covariance entries, powers, and the terminal MSE.
    pub max_abs_z: f64,
    pub pass: bool,
}

struct Accumulator {
    n: usize,
    sum_q: VecQ,
    sum_qq: MatQ,
    sum_qq_sq: MatQ,
    /// Per step and node: sums of x, x^2, x^4.
    power: Vec<[f64; 9]>,
    sum_e1: f64,
    sum_e1_sq: f64,
    sum_e2: f64,
    sum_e2_sq: f64,
    sum_e: f64,
    sum_e_sq: f64,
}

impl Accumulator {
    fn new(horizon: usize) -> Self {
        Accumulator {
            n: 0,
            sum_q: VecQ::zeros(),
            sum_qq: MatQ::zeros(),
            sum_qq_sq: MatQ::zeros(),
            power: vec![[0.0; 9]; horizon],
            sum_e1: 0.0,
            sum_e1_sq: 0.0,
            sum_e2: 0.0,
            sum_e2_sq: 0.0,
            sum_e: 0.0,
            sum_e_sq: 0.0,
        }
    }

    fn add(&mut self, traj: &Trajectory) {
        self.n += 1;
        let last = traj.u1.len() - 1;
        let mut q = VecQ::zeros();
        q[layout::M1] = traj.m1;
        q[layout::M2] = traj.m2;
        q.fixed_view_mut::<3, 1>(layout::U1, 0).copy_from(&traj.u1[last]);
        q.fixed_view_mut::<3, 1>(layout::U2, 0).copy_from(&traj.u2[last]);
        q.fixed_view_mut::<3, 1>(layout::UR, 0).copy_from(&traj.ur[last]);
        self.sum_q += q;
        for i in 0..Q_DIM {
            for j in 0..Q_DIM {
                let p = q[i] * q[j];
                self.sum_qq[(i, j)] += p;
                self.sum_qq_sq[(i, j)] += p * p;
            }
        }
        for t in 0..traj.x1.len() {
            let acc = &mut self.power[t];
            for (k, x) in [traj.x1[t], traj.x2[t], traj.xr[t]].into_iter().enumerate() {
                acc[3 * k] += x;
                acc[3 * k + 1] += x * x;
                acc[3 * k + 2] += x * x * x * x;
            }
        }
        let e1 = (traj.m1 - traj.m1_hat).powi(2);
        let e2 = (traj.m2 - traj.m2_hat).powi(2);
        self.sum_e1 += e1;
        self.sum_e1_sq += e1 * e1;
        self.sum_e2 += e2;
        self.sum_e2_sq += e2 * e2;
        let e = e1 + e2;
        self.sum_e += e;
        self.sum_e_sq += e * e;
    }

    fn merge(mut self, other: Accumulator) -> Accumulator {
        self.n += other.n;
        self.sum_q += other.sum_q;
        self.sum_qq += other.sum_qq;
        self.sum_qq_sq += other.sum_qq_sq;
        for (a, b) in self.power.iter_mut().zip(other.power.iter()) {
            for k in 0..9 {
                a[k] += b[k];
            }
        }
        self.sum_e1 += other.sum_e1;
        self.sum_e1_sq += other.sum_e1_sq;
        self.sum_e2 += other.sum_e2;
        self.sum_e2_sq += other.sum_e2_sq;
        self.sum_e += other.sum_e;
        self.sum_e_sq += other.sum_e_sq;
        self
    }
}

/// z = (estimate - reference) / SE, with exact agreement mapping to zero
/// when the sampling variance vanishes (deterministic coordinates).
fn z_stat(estimate: f64, reference: f64, se: f64) -> f64 {
    let diff = estimate - reference;
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Run `n` trajectories and compare the empirical terminal joint
/// covariance, the per-step transmit powers, and the terminal MSE against
/// the supplied analytic trajectory.
///
/// Exposed separately from [`monte_carlo`] so that a deliberately corrupted
/// reference can be fed in to check that the detector actually fails.
pub fn monte_carlo_against(
    schedule: &ControllerSchedule,
    config: &SystemConfig,
    n: usize,
    seed: u64,
    analytic: &CovTrajectory,
) -> Result<McReport> {
    if n < 2 {
        return Err(Error::InvalidConfig(
            "monte carlo needs at least 2 samples".into(),
        ));
    }
    let plan = SimPlan::new(schedule, config, analytic);
    let horizon = schedule.horizon();

    let n_chunks = n.div_ceil(MC_CHUNK);
    let chunks: Vec<Accumulator> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * MC_CHUNK;
            let hi = ((chunk + 1) * MC_CHUNK).min(n);
            let mut acc = Accumulator::new(horizon);
            for index in lo..hi {
                let traj = sample_trajectory(&plan, config, seed, index as u64);
                acc.add(&traj);
            }
            acc
        })
        .collect();
    let acc = chunks
        .into_iter()
        .fold(Accumulator::new(horizon), Accumulator::merge);

    let nf = acc.n as f64;
    let denom = nf - 1.0;
    let analytic_q = analytic.sigma_q.last().expect("horizon >= 1");
    let mut empirical_sigma_q = MatQ::zeros();
    let mut sigma_q_z = MatQ::zeros();
    let mut max_sigma_q_z = 0.0f64;
    for i in 0..Q_DIM {
        for j in 0..Q_DIM {
            let mean_i = acc.sum_q[i] / nf;
            let mean_j = acc.sum_q[j] / nf;
            let cov = (acc.sum_qq[(i, j)] - nf * mean_i * mean_j) / denom;
            let p_mean = acc.sum_qq[(i, j)] / nf;
            let p_var = ((acc.sum_qq_sq[(i, j)] - nf * p_mean * p_mean) / denom).max(0.0);
            let se = (p_var / nf).sqrt();
            let z = z_stat(cov, analytic_q[(i, j)], se);
            empirical_sigma_q[(i, j)] = cov;
            sigma_q_z[(i, j)] = z;
            max_sigma_q_z = max_sigma_q_z.max(z.abs());
        }
    }

    let mut empirical_power = Vec::with_capacity(horizon);
    let mut power_z = Vec::with_capacity(horizon);
    let mut max_power_z = 0.0f64;
    for t in 0..horizon {
        let g = &analytic.gains[t];
        let targets = [g.d1.achieved_power, g.d2.achieved_power, g.dr.achieved_power];
        let mut emp = [0.0; 3];
        let mut zs = [0.0; 3];
        for k in 0..3 {
            let sx = acc.power[t][3 * k];
            let sx2 = acc.power[t][3 * k + 1];
            let sx4 = acc.power[t][3 * k + 2];
            let mean = sx / nf;
            let var = (sx2 - nf * mean * mean) / denom;
            let m2 = sx2 / nf;
            let var_of_sq = ((sx4 - nf * m2 * m2) / denom).max(0.0);
            let se = (var_of_sq / nf).sqrt();
            let z = z_stat(var, targets[k], se);
            emp[k] = var;
            zs[k] = z;
            max_power_z = max_power_z.max(z.abs());
        }
        empirical_power.push(emp);
        power_z.push(zs);
    }

    let (av1, av2) = analytic.message_variances(horizon - 1);
    let analytic_mse = av1 + av2;
    let empirical_mse = acc.sum_e / nf;
    let e_var = ((acc.sum_e_sq - nf * empirical_mse * empirical_mse) / denom).max(0.0);
    let mse_z = z_stat(empirical_mse, analytic_mse, (e_var / nf).sqrt());

    let max_abs_z = max_sigma_q_z.max(max_power_z).max(mse_z.abs());
    Ok(McReport {
        samples: acc.n,
        seed,
        empirical_sigma_q,
        sigma_q_z,
        max_sigma_q_z,
        empirical_power,
        power_z,
        max_power_z,
        empirical_mse1: acc.sum_e1 / nf,
        empirical_mse2: acc.sum_e2 / nf,
        empirical_mse,
        analytic_mse,
        mse_z,
        max_abs_z,
        pass: max_abs_z <= 5.0,
    })
}

/// Monte Carlo consistency check of a schedule against its own analytic
/// trajectory.
pub fn monte_carlo(
    schedule: &ControllerSchedule,
    config: &SystemConfig,
    n: usize,
    seed: u64,
) -> Result<McReport> {
    let analytic = run_deterministic(schedule, config)?;
    monte_carlo_against(schedule, config, n, seed, &analytic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn plan_for(schedule: &ControllerSchedule, config: &SystemConfig) -> (SimPlan, CovTrajectory) {
        let analytic = run_deterministic(schedule, config).unwrap();
        let plan = SimPlan::new(schedule, config, &analytic);
        (plan, analytic)
    }

    #[test]
    fn zero_noise_zero_power_decodes_to_prior_mean() {
        let mut config = SystemConfig::unit(3);
        config.p1 = 0.0;
        config.p2 = 0.0;
        config.pr = 0.0;
        let schedule = ControllerSchedule::repetition(3);
        let (plan, _) = plan_for(&schedule, &config);
        let mut draws = NoiseDraws::zeros(3);
        draws.m1 = 0.7;
        draws.m2 = -1.1;
        let traj = rollout(&plan, &draws);
        assert_eq!(traj.m1_hat, 0.0);
        assert_eq!(traj.m2_hat, 0.0);
        let sq_err = (traj.m1 - traj.m1_hat).powi(2) + (traj.m2 - traj.m2_hat).powi(2);
        assert_relative_eq!(sq_err, 0.7f64.powi(2) + 1.1f64.powi(2), epsilon = 1e-15);
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let config = SystemConfig::unit(4);
        let schedule = ControllerSchedule::repetition(4);
        let (plan, _) = plan_for(&schedule, &config);
        let a = sample_trajectory(&plan, &config, 99, 3);
        let b = sample_trajectory(&plan, &config, 99, 3);
        assert_eq!(a.yr, b.yr);
        assert_eq!(a.m1_hat.to_bits(), b.m1_hat.to_bits());
        assert_eq!(a.m2_hat.to_bits(), b.m2_hat.to_bits());
    }

    #[test]
    fn channel_output_identity_holds_exactly() {
        let config = SystemConfig::unit(4);
        let schedule = ControllerSchedule::repetition(4);
        let (plan, _) = plan_for(&schedule, &config);
        let traj = sample_trajectory(&plan, &config, 5, 11);
        for t in 0..4 {
            assert_eq!(traj.yr[t], traj.x1[t] + traj.x2[t] + traj.w_f[t]);
        }
    }

    #[test]
    fn estimator_mean_tracks_realized_output() {
        let mut config = SystemConfig::unit(5);
        config.pr = 0.7;
        let mut schedule = ControllerSchedule::repetition(5);
        for step in &mut schedule.steps {
            step.g1.c = Vec3::new(0.4, 0.0, -0.3);
            step.gr.c = Vec3::new(0.8, 0.1, 0.0);
        }
        let (plan, _) = plan_for(&schedule, &config);
        let traj = sample_trajectory(&plan, &config, 17, 2);
        for t in 0..5 {
            assert!(
                (traj.mean[t][layout::YR] - traj.yr[t]).abs() <= 1e-9,
                "estimator output coordinate diverged at t = {t}"
            );
        }
    }

    #[test]
    fn single_step_mse_matches_analytic_value() {
        let config = SystemConfig::unit(1);
        let schedule = ControllerSchedule::repetition(1);
        let report = monte_carlo(&schedule, &config, 100_000, 1234).unwrap();
        // Per-message MMSE is 2/3; five standard errors of the mean.
        let se = (report.empirical_mse1 / (report.samples as f64).sqrt()) * 3.0;
        assert!(
            (report.empirical_mse1 - 2.0 / 3.0).abs() < 5.0 * se.max(1e-3),
            "mse1 = {}",
            report.empirical_mse1
        );
        assert!(report.pass, "max |z| = {}", report.max_abs_z);
    }

    #[test]
    fn zero_power_schedule_passes_consistency() {
        let mut config = SystemConfig::unit(3);
        config.p1 = 0.0;
        config.p2 = 0.0;
        config.pr = 0.0;
        let schedule = ControllerSchedule::repetition(3);
        let report = monte_carlo(&schedule, &config, 10_000, 7).unwrap();
        assert!(report.pass, "max |z| = {}", report.max_abs_z);
        assert_relative_eq!(report.analytic_mse, 2.0, epsilon = 1e-12);
        assert!((report.empirical_mse - 2.0).abs() < 0.2);
    }

    #[test]
    fn corrupted_reference_fails_consistency() {
        let config = SystemConfig::unit(2);
        let schedule = ControllerSchedule::repetition(2);
        let mut analytic = run_deterministic(&schedule, &config).unwrap();
        // Scale the terminal covariance: every nonzero entry is now wrong.
        let last = analytic.sigma_q.last_mut().unwrap();
        *last *= 1.5;
        let report = monte_carlo_against(&schedule, &config, 20_000, 3, &analytic).unwrap();
        assert!(!report.pass, "corrupted reference must fail");
    }

    #[test]
    fn parallelism_does_not_change_the_report() {
        let config = SystemConfig::unit(3);
        let schedule = ControllerSchedule::repetition(3);
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| monte_carlo(&schedule, &config, 5000, 11).unwrap());
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| monte_carlo(&schedule, &config, 5000, 11).unwrap());
        assert_eq!(
            serial.empirical_mse.to_bits(),
            parallel.empirical_mse.to_bits()
        );
        for i in 0..Q_DIM {
            for j in 0..Q_DIM {
                assert_eq!(
                    serial.empirical_sigma_q[(i, j)].to_bits(),
                    parallel.empirical_sigma_q[(i, j)].to_bits()
                );
            }
        }
    }

    #[test]
    fn realized_powers_match_analytic_on_feedback_schedule() {
        let mut config = SystemConfig::unit(3);
        config.pr = 1.5;
        let mut schedule = ControllerSchedule::repetition(3);
        for step in &mut schedule.steps {
            step.g1.c = Vec3::new(0.3, 0.2, 0.0);
            step.g2.c = Vec3::new(-0.25, 0.0, 0.1);
            step.gr.c = Vec3::new(0.9, 0.0, 0.2);
        }
        let report = monte_carlo(&schedule, &config, 50_000, 21).unwrap();
        assert!(
            report.max_power_z <= 5.0,
            "power z = {}",
            report.max_power_z
        );
    }
}
