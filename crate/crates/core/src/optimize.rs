//! Terminal-cost minimization over controller schedules.
//!
//! The conditional covariance process is deterministic given the schedule,
//! so the dynamic program over covariance states collapses to open-loop
//! minimization over the parameter sequence. Two search layers realize it:
//! a backward block-coordinate sweep (per-step Nelder-Mead, t = T-1 down to
//! 0) standing in for the backward recursion, and a cross-entropy-method
//! global search wrapped around it with seeded restarts.

use std::ops::Range;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::{CostVariant, PowerMode, SystemConfig};
use crate::covariance::run_deterministic;
use crate::error::Error;
use crate::model::{ControllerSchedule, Mat3, Node, Vec3, NODES};
use crate::Result;

/// Controller entries per step: (a, b, c) for a sender, (a, c) for the
/// receiver.
const SENDER_ENTRIES: usize = 15;
const RECEIVER_ENTRIES: usize = 12;

/// Flat parameterization of the schedules reachable by the optimizer.
///
/// Controller entries are packed step-major, row-major within each matrix:
/// per step (a1, b1, c1, a2, b2, c2, ar, cr), followed in total-power mode
/// by one allocation logit per free node. Logits map to simplex fractions
/// through a per-node softmax across steps, so the allocation constraint
/// holds by construction. With a frozen receiver its entries and logit are
/// omitted and taken from the template instead.
#[derive(Debug, Clone)]
pub struct ParamSpace {
    config: SystemConfig,
    template: ControllerSchedule,
}

impl ParamSpace {
    pub fn new(config: &SystemConfig, template: ControllerSchedule) -> Result<Self> {
        config.validate()?;
        template.validate(config)?;
        Ok(ParamSpace {
            config: config.clone(),
            template,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn template(&self) -> &ControllerSchedule {
        &self.template
    }

    fn frozen(&self) -> bool {
        self.template.receiver_frozen
    }

    fn free_nodes(&self) -> &'static [Node] {
        if self.frozen() {
            &NODES[..2]
        } else {
            &NODES[..]
        }
    }

    fn controller_len(&self) -> usize {
        if self.frozen() {
            2 * SENDER_ENTRIES
        } else {
            2 * SENDER_ENTRIES + RECEIVER_ENTRIES
        }
    }

    /// Entries per step block (controllers plus allocation logits).
    pub fn step_len(&self) -> usize {
        let logits = match self.config.power_mode {
            PowerMode::Instantaneous => 0,
            PowerMode::Total => self.free_nodes().len(),
        };
        self.controller_len() + logits
    }

    pub fn len(&self) -> usize {
        self.step_len() * self.config.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate range of step `t`'s block.
    pub fn step_block(&self, t: usize) -> Range<usize> {
        let w = self.step_len();
        w * t..w * (t + 1)
    }

    pub fn pack(&self, schedule: &ControllerSchedule) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for step in &schedule.steps {
            for node in self.free_nodes() {
                let g = step.node(*node);
                out.extend(g.a.transpose().iter()); // row-major
                if let Some(b) = g.b {
                    out.extend(b.iter());
                }
                out.extend(g.c.iter());
            }
            if self.config.power_mode == PowerMode::Total {
                for node in self.free_nodes() {
                    out.push(step.rho(*node).max(1e-30).ln());
                }
            }
        }
        out
    }

    /// Rebuild a schedule from a flat vector, clamping controller entries
    /// into the box. Frozen parts come from the template.
    pub fn unpack(&self, theta: &[f64]) -> Result<ControllerSchedule> {
        if theta.len() != self.len() {
            return Err(Error::InvalidConfig(format!(
                "parameter vector length {} does not match the space ({})",
                theta.len(),
                self.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("parameter vector"));
        }
        let bound = self.config.param_box;
        let clamp = |v: f64| v.clamp(-bound, bound);
        let mut schedule = self.template.clone();
        let horizon = self.config.horizon;
        let mut logits: Vec<Vec<f64>> = vec![Vec::with_capacity(horizon); self.free_nodes().len()];
        for (t, step) in schedule.steps.iter_mut().enumerate() {
            let mut cursor = self.step_block(t).start;
            for node in self.free_nodes() {
                let g = step.node_mut(*node);
                for r in 0..3 {
                    for c in 0..3 {
                        g.a[(r, c)] = clamp(theta[cursor]);
                        cursor += 1;
                    }
                }
                if g.b.is_some() {
                    let mut b = Vec3::zeros();
                    for r in 0..3 {
                        b[r] = clamp(theta[cursor]);
                        cursor += 1;
                    }
                    g.b = Some(b);
                }
                for r in 0..3 {
                    g.c[r] = clamp(theta[cursor]);
                    cursor += 1;
                }
            }
            if self.config.power_mode == PowerMode::Total {
                for slot in logits.iter_mut() {
                    slot.push(theta[cursor]);
                    cursor += 1;
                }
            }
        }
        if self.config.power_mode == PowerMode::Total {
            for (k, node) in self.free_nodes().iter().enumerate() {
                let fractions = softmax(&logits[k]);
                for (t, step) in schedule.steps.iter_mut().enumerate() {
                    *step.rho_mut(*node) = fractions[t];
                }
            }
        }
        Ok(schedule)
    }

    /// Cost with unpack failures mapped to infinity; the form the search
    /// loops consume.
    fn cost_or_inf(&self, theta: &[f64]) -> f64 {
        match evaluate_cost(self, theta) {
            Ok(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Unpack a parameter vector and evaluate its terminal cost. Pure and
/// deterministic; rejects non-finite entries.
pub fn evaluate_cost(space: &ParamSpace, theta: &[f64]) -> Result<f64> {
    let schedule = space.unpack(theta)?;
    Ok(run_deterministic(&schedule, &space.config)?.terminal_cost)
}

// ---------------------------------------------------------------------------
// Nelder-Mead
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub cost: f64,
    pub evals: usize,
}

/// Initial simplex spread; signs alternate across coordinates so flips of
/// sign-sensitive parameters are reachable from the first simplex.
const NM_STEP: f64 = 1.0;

/// Budget-driven Nelder-Mead with best-ever tracking. The start point is a
/// simplex vertex, so the result never exceeds the starting cost.
pub fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    budget: usize,
) -> NelderMeadResult {
    let n = x0.len();
    let mut evals = 0usize;
    let f0 = f(x0);
    evals += 1;
    let mut best = (x0.to_vec(), f0);
    if budget <= n + 1 || n == 0 {
        return NelderMeadResult {
            x: best.0,
            cost: best.1,
            evals,
        };
    }

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut costs: Vec<f64> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    costs.push(f0);
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += if i % 2 == 0 { step } else { -step };
        let c = f(&v);
        evals += 1;
        if c < best.1 {
            best = (v.clone(), c);
        }
        simplex.push(v);
        costs.push(c);
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    while evals < budget {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| {
            costs[a]
                .partial_cmp(&costs[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let b_idx = order[0];
        let w_idx = order[n];
        let sw_idx = order[n - 1];
        if costs[w_idx] - costs[b_idx] <= 1e-14 * (costs[b_idx].abs() + 1e-14) {
            break;
        }

        let mut centroid = vec![0.0; n];
        for &idx in order.iter().take(n) {
            for d in 0..n {
                centroid[d] += simplex[idx][d];
            }
        }
        for c in centroid.iter_mut() {
            *c /= n as f64;
        }

        let blend = |from: &[f64], coeff: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(from.iter())
                .map(|(c, w)| c + coeff * (c - w))
                .collect()
        };

        let reflected = blend(&simplex[w_idx], alpha);
        let fr = f(&reflected);
        evals += 1;
        if fr < best.1 {
            best = (reflected.clone(), fr);
        }

        if fr < costs[b_idx] && evals < budget {
            let expanded = blend(&simplex[w_idx], gamma);
            let fe = f(&expanded);
            evals += 1;
            if fe < best.1 {
                best = (expanded.clone(), fe);
            }
            if fe < fr {
                simplex[w_idx] = expanded;
                costs[w_idx] = fe;
            } else {
                simplex[w_idx] = reflected;
                costs[w_idx] = fr;
            }
            continue;
        }
        if fr < costs[sw_idx] {
            simplex[w_idx] = reflected;
            costs[w_idx] = fr;
            continue;
        }
        if evals >= budget {
            break;
        }
        let contracted = blend(&simplex[w_idx], -rho);
        let fc = f(&contracted);
        evals += 1;
        if fc < best.1 {
            best = (contracted.clone(), fc);
        }
        if fc < costs[w_idx] {
            simplex[w_idx] = contracted;
            costs[w_idx] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        let anchor = simplex[b_idx].clone();
        for idx in 0..=n {
            if idx == b_idx {
                continue;
            }
            for d in 0..n {
                simplex[idx][d] = anchor[d] + sigma * (simplex[idx][d] - anchor[d]);
            }
            let c = f(&simplex[idx]);
            evals += 1;
            if c < best.1 {
                best = (simplex[idx].clone(), c);
            }
            costs[idx] = c;
            if evals >= budget {
                break;
            }
        }
    }

    NelderMeadResult {
        x: best.0,
        cost: best.1,
        evals,
    }
}

/// Finite-difference gradient descent with backtracking; an optional
/// smooth-polish alternative to the simplex search.
pub fn gradient_descent(
    space: &ParamSpace,
    theta0: &[f64],
    iterations: usize,
) -> (Vec<f64>, f64, usize) {
    let mut x = theta0.to_vec();
    let mut fx = space.cost_or_inf(&x);
    let mut evals = 1usize;
    let n = x.len();
    for _ in 0..iterations {
        let mut grad = vec![0.0; n];
        for i in 0..n {
            let h = 1e-6 * x[i].abs().max(1e-6);
            let mut xp = x.clone();
            xp[i] += h;
            let fp = space.cost_or_inf(&xp);
            evals += 1;
            grad[i] = (fp - fx) / h;
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < 1e-12 {
            break;
        }
        let mut step = 1.0 / norm.max(1.0);
        let mut improved = false;
        for _ in 0..20 {
            let cand: Vec<f64> = x.iter().zip(grad.iter()).map(|(v, g)| v - step * g).collect();
            let fc = space.cost_or_inf(&cand);
            evals += 1;
            if fc < fx {
                x = cand;
                fx = fc;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (x, fx, evals)
}

// ---------------------------------------------------------------------------
// Backward sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub theta: Vec<f64>,
    pub cost: f64,
    /// Best cost after each block optimization; non-increasing.
    pub trace: Vec<f64>,
    pub evals: usize,
}

/// Block-coordinate realization of the backward recursion: for each sweep,
/// minimize the total cost over the step-t block for t = T-1 down to 0 with
/// a budgeted Nelder-Mead, holding every other step fixed.
pub fn backward_sweep(
    space: &ParamSpace,
    theta0: &[f64],
    sweeps: usize,
    inner_budget: usize,
) -> Result<SweepResult> {
    if theta0.len() != space.len() {
        return Err(Error::InvalidConfig(format!(
            "warm start length {} does not match the space ({})",
            theta0.len(),
            space.len()
        )));
    }
    if theta0.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("warm start"));
    }
    let mut theta = theta0.to_vec();
    let mut cost = space.cost_or_inf(&theta);
    let mut evals = 1usize;
    let mut trace = Vec::new();
    let horizon = space.config.horizon;
    for _ in 0..sweeps {
        for t in (0..horizon).rev() {
            let range = space.step_block(t);
            let block0 = theta[range.clone()].to_vec();
            let base = theta.clone();
            let mut f = |xb: &[f64]| {
                let mut cand = base.clone();
                cand[range.clone()].copy_from_slice(xb);
                space.cost_or_inf(&cand)
            };
            let res = nelder_mead(&mut f, &block0, NM_STEP, inner_budget);
            evals += res.evals;
            if res.cost < cost {
                theta[range].copy_from_slice(&res.x);
                cost = res.cost;
            }
            trace.push(cost);
        }
    }
    Ok(SweepResult {
        theta,
        cost,
        trace,
        evals,
    })
}

// ---------------------------------------------------------------------------
// Cross-entropy method
// ---------------------------------------------------------------------------

struct CemOutcome {
    theta: Vec<f64>,
    cost: f64,
    evals: usize,
    trace: Vec<f64>,
}

/// Population search with diagonal-Gaussian elite refitting. Candidate
/// generation is serial from the stream RNG; evaluation is parallel with an
/// order-deterministic reduction.
fn cross_entropy(
    space: &ParamSpace,
    mean0: &[f64],
    sigma0: f64,
    budget: usize,
    rng: &mut ChaCha12Rng,
) -> CemOutcome {
    let n = mean0.len();
    let bound = space.config.param_box;
    let population = (16 + 4 * (n as f64).ln().ceil() as usize).max(16);
    let elites = (population / 4).max(2);

    let mut mu = mean0.to_vec();
    let mut sd = vec![sigma0; n];
    let mut best = (mean0.to_vec(), space.cost_or_inf(mean0));
    let mut evals = 1usize;
    let mut trace = vec![best.1];

    while evals + population <= budget {
        let candidates: Vec<Vec<f64>> = (0..population)
            .map(|_| {
                (0..n)
                    .map(|i| {
                        let z: f64 = rng.sample(StandardNormal);
                        (mu[i] + sd[i] * z).clamp(-bound, bound)
                    })
                    .collect()
            })
            .collect();
        let costs: Vec<f64> = candidates
            .par_iter()
            .map(|c| space.cost_or_inf(c))
            .collect();
        evals += population;

        let mut order: Vec<usize> = (0..population).collect();
        order.sort_by(|&a, &b| {
            costs[a]
                .partial_cmp(&costs[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        if costs[order[0]] < best.1 {
            best = (candidates[order[0]].clone(), costs[order[0]]);
        }
        trace.push(best.1);

        let chosen = &order[..elites];
        for i in 0..n {
            let mean_i = chosen.iter().map(|&k| candidates[k][i]).sum::<f64>() / elites as f64;
            let var_i = chosen
                .iter()
                .map(|&k| (candidates[k][i] - mean_i).powi(2))
                .sum::<f64>()
                / elites as f64;
            mu[i] = 0.85 * mean_i + 0.15 * mu[i];
            sd[i] = (0.85 * var_i.sqrt() + 0.15 * sd[i]).max(0.01);
        }
    }

    CemOutcome {
        theta: best.0,
        cost: best.1,
        evals,
        trace,
    }
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

/// Closed-form reference costs.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticBaselines {
    /// No transmit power anywhere: the prior cost.
    pub zero_power: f64,
    /// Repetition without feedback at slot power P/T per node; per-message
    /// MMSE is `sigma_m^2 (1 - p_i / (p_1 + p_2 + sigma_f^2 / T))`.
    pub no_feedback_repetition: f64,
    /// Single channel use spending the full budgets.
    pub single_shot: f64,
}

fn combine_costs(v1: f64, v2: f64, variant: CostVariant) -> f64 {
    match variant {
        CostVariant::SumVariance => v1 + v2,
        CostVariant::SumSquaredVariance => v1 * v1 + v2 * v2,
    }
}

pub fn analytic_baselines(config: &SystemConfig) -> Result<AnalyticBaselines> {
    config.validate()?;
    let t = config.horizon as f64;
    let zero_power = combine_costs(config.sigma_m1_sq, config.sigma_m2_sq, config.cost_variant);

    let p1 = config.p1 / t;
    let p2 = config.p2 / t;
    let denom = p1 + p2 + config.sigma_f_sq / t;
    let rep1 = config.sigma_m1_sq * (1.0 - if denom > 0.0 { p1 / denom } else { 0.0 });
    let rep2 = config.sigma_m2_sq * (1.0 - if denom > 0.0 { p2 / denom } else { 0.0 });
    let no_feedback_repetition = combine_costs(rep1, rep2, config.cost_variant);

    let sdenom = config.p1 + config.p2 + config.sigma_f_sq;
    let ss1 = config.sigma_m1_sq * (1.0 - if sdenom > 0.0 { config.p1 / sdenom } else { 0.0 });
    let ss2 = config.sigma_m2_sq * (1.0 - if sdenom > 0.0 { config.p2 / sdenom } else { 0.0 });
    let single_shot = combine_costs(ss1, ss2, config.cost_variant);

    Ok(AnalyticBaselines {
        zero_power,
        no_feedback_repetition,
        single_shot,
    })
}

/// Passive-feedback schedule: the receiver relays its latest observation
/// (`ar = 0`, `cr = e1`, so `ur_{t+1} = (yr_t, 0, 0)` and the transmit
/// normalization makes `xr_t` proportional to `yr_{t-1}`). Sender
/// parameters start at repetition and stay free; the receiver is frozen for
/// the optimizers.
pub fn passive_baseline(config: &SystemConfig) -> Result<ControllerSchedule> {
    config.validate()?;
    if config.pr <= 0.0 {
        return Err(Error::InvalidConfig(
            "passive feedback needs a positive receiver power budget".into(),
        ));
    }
    let mut schedule = ControllerSchedule::repetition(config.horizon);
    for step in &mut schedule.steps {
        step.gr.a = Mat3::zeros();
        step.gr.c = Vec3::new(1.0, 0.0, 0.0);
    }
    schedule.receiver_frozen = true;
    Ok(schedule)
}

/// Random in-box schedule; used for restart seeding and tests.
pub fn random_schedule(
    config: &SystemConfig,
    rng: &mut impl Rng,
    scale: f64,
) -> ControllerSchedule {
    let bound = config.param_box;
    let mut schedule = ControllerSchedule::zeroed(config.horizon);
    let horizon = config.horizon;
    for step in &mut schedule.steps {
        for node in NODES {
            let g = step.node_mut(node);
            g.a = Mat3::from_fn(|_, _| rng.random_range(-scale..scale).clamp(-bound, bound));
            if g.b.is_some() {
                g.b = Some(Vec3::from_fn(|_, _| {
                    rng.random_range(-scale..scale).clamp(-bound, bound)
                }));
            }
            g.c = Vec3::from_fn(|_, _| rng.random_range(-scale..scale).clamp(-bound, bound));
        }
    }
    if config.power_mode == PowerMode::Total {
        for node in NODES {
            let logits: Vec<f64> = (0..horizon).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fractions = softmax(&logits);
            for (t, step) in schedule.steps.iter_mut().enumerate() {
                *step.rho_mut(node) = fractions[t];
            }
        }
    }
    schedule
}

// ---------------------------------------------------------------------------
// Joint optimization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct OptimizeOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Total cost-evaluation budget across all restarts, search and polish
    /// included.
    pub budget: usize,
    /// Freeze the receiver to the passive relay.
    pub passive: bool,
    /// Additional warm-start schedules, consumed by restart index after the
    /// built-in ones.
    pub extra_warm_starts: Vec<ControllerSchedule>,
    /// Polish sweeps per restart.
    pub sweeps: usize,
}

impl OptimizeOptions {
    pub fn new(seed: u64) -> Self {
        OptimizeOptions {
            restarts: 4,
            seed,
            budget: 10_000,
            passive: false,
            extra_warm_starts: Vec::new(),
            sweeps: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationReport {
    pub best_schedule: ControllerSchedule,
    pub best_cost: f64,
    /// Best-so-far cost after each search iteration, concatenated across
    /// restarts (CEM generations, then sweep blocks, per restart).
    pub cost_trace: Vec<f64>,
    pub restarts: usize,
    pub eval_count: usize,
    pub wall_time_ms: u128,
    pub baselines: AnalyticBaselines,
    /// Cost of the passive relay template under this config, when the
    /// receiver budget allows one.
    pub passive_cost: Option<f64>,
    /// Evaluated cost of each warm start actually used, by restart.
    pub warm_start_costs: Vec<f64>,
}

/// Global search: seeded cross-entropy restarts, each polished by a
/// backward sweep, never returning worse than any warm start it consumed.
/// Deterministic given (config, options).
pub fn joint_optimize(
    config: &SystemConfig,
    options: &OptimizeOptions,
) -> Result<OptimizationReport> {
    let start = Instant::now();
    config.validate()?;
    if options.budget < 1 {
        return Err(Error::InvalidConfig("budget must be at least 1".into()));
    }
    if options.restarts < 1 {
        return Err(Error::InvalidConfig("restarts must be at least 1".into()));
    }

    let template = if options.passive {
        passive_baseline(config)?
    } else {
        ControllerSchedule::repetition(config.horizon)
    };
    let space = ParamSpace::new(config, template.clone())?;

    // Warm starts: the template (repetition or passive relay) first, then
    // caller-provided schedules, then seeded random schedules.
    let mut warm: Vec<Vec<f64>> = vec![space.pack(&template)];
    for extra in &options.extra_warm_starts {
        extra.validate(config)?;
        let mut adopted = extra.clone();
        adopted.receiver_frozen = template.receiver_frozen;
        warm.push(space.pack(&adopted));
    }

    // Never spend more evaluations than the budget: a tiny budget caps the
    // restart count instead.
    let restarts = options.restarts.min(options.budget).max(1);
    let per_restart = (options.budget / restarts).max(1);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trace = Vec::new();
    let mut eval_count = 0usize;
    let mut warm_start_costs = Vec::with_capacity(restarts);

    for restart in 0..restarts {
        let mut rng = ChaCha12Rng::seed_from_u64(options.seed);
        rng.set_stream(restart as u64 + 1);
        let theta0 = if restart < warm.len() {
            warm[restart].clone()
        } else {
            space.pack(&random_schedule(config, &mut rng, 1.5))
        };

        // The search evaluates its own start point; its first trace entry is
        // the warm-start cost.
        let cem_budget = per_restart * 3 / 5;
        let searched = cross_entropy(&space, &theta0, 1.0, cem_budget, &mut rng);
        eval_count += searched.evals;
        warm_start_costs.push(searched.trace[0]);
        trace.extend(searched.trace.iter().copied());
        let (mut cand, mut cand_cost) = (searched.theta, searched.cost);

        // Polish with whatever budget the search left over, shortening the
        // sweep if the remainder cannot feed every block.
        let polish_budget = per_restart.saturating_sub(searched.evals);
        let min_inner = space.step_len() + 2;
        let mut sweeps = options.sweeps.max(1);
        let mut inner = polish_budget.saturating_sub(1) / (sweeps * config.horizon).max(1);
        if inner < min_inner && sweeps > 1 {
            sweeps = 1;
            inner = polish_budget.saturating_sub(1) / config.horizon.max(1);
        }
        if inner >= min_inner {
            let polished = backward_sweep(&space, &cand, sweeps, inner)?;
            eval_count += polished.evals;
            trace.extend(polished.trace.iter().copied());
            if polished.cost <= cand_cost {
                cand = polished.theta;
                cand_cost = polished.cost;
            }
        }

        let better = match &best {
            None => true,
            Some((_, c)) => cand_cost < *c,
        };
        if better {
            best = Some((cand, cand_cost));
        }
    }

    let (best_theta, best_cost) = best.expect("at least one restart");
    let best_schedule = space.unpack(&best_theta)?;
    let baselines = analytic_baselines(config)?;
    let passive_cost = if config.pr > 0.0 {
        let passive = passive_baseline(config)?;
        Some(run_deterministic(&passive, config)?.terminal_cost)
    } else {
        None
    };

    Ok(OptimizationReport {
        best_schedule,
        best_cost,
        cost_trace: trace,
        restarts,
        eval_count,
        wall_time_ms: start.elapsed().as_millis(),
        baselines,
        passive_cost,
        warm_start_costs,
    })
}
