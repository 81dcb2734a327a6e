//! Receding-horizon control with an ensemble of CEM planners.
//!
//! Every control step warm-starts the workers, runs a few CEM rounds on the
//! rollout cost from the current state, computes the centroid of the
//! worker plans, optionally respawns the least relevant workers inside the
//! trust region, and executes the first action of the best worker.

use std::time::{Duration, Instant};

use rand_distr::{Distribution, Normal};

use crate::cem::{best_worker_index, cem_iterate, Bounds, CemConfig, Coupler};
use crate::centroid::{Centroid, WorkerState};
use crate::error::{Error, Result};
use crate::expfam::DiagGaussian;
use crate::rng::RngStream;
use crate::trust_region::SamplerKind;

/// Deterministic, side-effect free transition `x' = f(x, u)`.
pub trait Dynamics {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn step(&self, state: &[f64], action: &[f64], next: &mut [f64]);
}

/// First-order point mass: `x' = x + u·dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMass {
    pub dim: usize,
    pub dt: f64,
}

impl PointMass {
    pub fn planar(dt: f64) -> Self {
        Self { dim: 2, dt }
    }
}

impl Dynamics for PointMass {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn action_dim(&self) -> usize {
        self.dim
    }

    fn step(&self, state: &[f64], action: &[f64], next: &mut [f64]) {
        for ((n, x), u) in next.iter_mut().zip(state).zip(action) {
            *n = x + u * self.dt;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// `step = w_g·‖x−goal‖ + w_o·Σ max(0, r + margin − ‖x−c‖)²`,
/// `terminal = w_T·‖x_H−goal‖`. Obstacles act on the first two state
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavigationCost {
    pub goal_weight: f64,
    pub obstacle_weight: f64,
    pub margin: f64,
    pub terminal_weight: f64,
}

impl Default for NavigationCost {
    fn default() -> Self {
        Self {
            goal_weight: 1.0,
            obstacle_weight: 100.0,
            margin: 0.05,
            terminal_weight: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutEnv<D = PointMass> {
    pub dynamics: D,
    pub cost: NavigationCost,
    pub obstacles: Vec<Circle>,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    /// Bounds of a single action.
    pub action_bounds: Bounds,
}

impl RolloutEnv<PointMass> {
    /// Cluttered planar layout between (0, 0) and (10, 10).
    pub fn cluttered(dt: f64) -> Self {
        let obstacles = [
            ([2.0, 3.0], 0.8),
            ([3.5, 1.5], 0.7),
            ([5.0, 5.0], 1.2),
            ([3.0, 6.0], 0.9),
            ([7.0, 3.5], 1.0),
            ([6.5, 8.0], 0.8),
            ([8.5, 6.0], 0.9),
            ([4.5, 8.5], 0.7),
        ]
        .into_iter()
        .map(|(center, radius)| Circle { center, radius })
        .collect();
        Self {
            dynamics: PointMass::planar(dt),
            cost: NavigationCost::default(),
            obstacles,
            start: vec![0.0, 0.0],
            goal: vec![10.0, 10.0],
            action_bounds: Bounds::uniform(2, -1.0, 1.0).expect("valid bounds"),
        }
    }
}

impl<D: Dynamics> RolloutEnv<D> {
    pub fn validate(&self) -> Result<()> {
        let (s, a) = (self.dynamics.state_dim(), self.dynamics.action_dim());
        Error::check_dim(s, self.start.len())?;
        Error::check_dim(s, self.goal.len())?;
        Error::check_dim(a, self.action_bounds.dim())?;
        if !self.obstacles.is_empty() && s < 2 {
            return Err(Error::InvalidConfig("obstacles need a state of dimension >= 2".into()));
        }
        if let Some(c) = self.obstacles.iter().find(|c| !(c.radius > 0.0)) {
            return Err(Error::InvalidConfig(format!("obstacle radius must be positive, got {}", c.radius)));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.dynamics.action_dim()
    }

    fn goal_distance(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.goal).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn obstacle_penalty(&self, x: &[f64]) -> f64 {
        self.obstacles
            .iter()
            .map(|c| {
                let (dx, dy) = (x[0] - c.center[0], x[1] - c.center[1]);
                let reach = c.radius + self.cost.margin;
                let d2 = dx * dx + dy * dy;
                if d2 >= reach * reach {
                    0.0
                } else {
                    let violation = reach - d2.sqrt();
                    violation * violation
                }
            })
            .sum()
    }

    /// Running cost of being in `x` (applied to every post-transition state).
    pub fn step_cost(&self, x: &[f64]) -> f64 {
        let mut c = self.cost.goal_weight * self.goal_distance(x);
        if !self.obstacles.is_empty() {
            c += self.cost.obstacle_weight * self.obstacle_penalty(x);
        }
        c
    }

    pub fn terminal_cost(&self, x: &[f64]) -> f64 {
        self.cost.terminal_weight * self.goal_distance(x)
    }

    /// All-actions bounds for a plan of `horizon` steps.
    pub fn plan_bounds(&self, horizon: usize) -> Bounds {
        Bounds {
            lower: self.action_bounds.lower.repeat(horizon),
            upper: self.action_bounds.upper.repeat(horizon),
        }
    }
}

/// Simulated plan: visited states (including `x0`) and total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<Vec<f64>>,
    pub cost: f64,
    /// The state became non-finite; `cost` is `+∞` and `states` stops there.
    pub diverged: bool,
}

/// Total cost of applying `actions` (flattened, `H·action_dim`) from `x0`.
/// Returns `+∞` when the state blows up.
pub fn rollout_cost<D: Dynamics>(env: &RolloutEnv<D>, x0: &[f64], actions: &[f64]) -> f64 {
    let (s, a) = (env.state_dim(), env.action_dim());
    let mut x = x0.to_vec();
    let mut next = vec![0.0; s];
    let mut total = 0.0;
    for u in actions.chunks_exact(a) {
        env.dynamics.step(&x, u, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        std::mem::swap(&mut x, &mut next);
        total += env.step_cost(&x);
    }
    let total = total + env.terminal_cost(&x);
    if total.is_finite() {
        total
    } else {
        f64::INFINITY
    }
}

pub fn rollout<D: Dynamics>(env: &RolloutEnv<D>, x0: &[f64], actions: &[f64]) -> Rollout {
    let (s, a) = (env.state_dim(), env.action_dim());
    let mut states = Vec::with_capacity(actions.len() / a.max(1) + 1);
    states.push(x0.to_vec());
    let mut total = 0.0;
    for u in actions.chunks_exact(a) {
        let mut next = vec![0.0; s];
        env.dynamics.step(states.last().expect("non-empty"), u, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Rollout {
                states,
                cost: f64::INFINITY,
                diverged: true,
            };
        }
        total += env.step_cost(&next);
        states.push(next);
    }
    total += env.terminal_cost(states.last().expect("non-empty"));
    Rollout {
        states,
        diverged: !total.is_finite(),
        cost: if total.is_finite() { total } else { f64::INFINITY },
    }
}

/// Drop the first action block and repeat the last one.
pub fn shift_plan(plan: &[f64], action_dim: usize) -> Vec<f64> {
    if plan.len() <= action_dim {
        return plan.to_vec();
    }
    let mut out = Vec::with_capacity(plan.len());
    out.extend_from_slice(&plan[action_dim..]);
    out.extend_from_slice(&plan[plan.len() - action_dim..]);
    out
}

/// How workers are initialised at each control step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarmStart {
    /// Shifted centroid plus a private perturbation.
    Centroid,
    /// Each worker shifts its own previous plan.
    ShiftOwn,
}

/// Sets every worker except those in `skip` to `shift(centroid) + ε`,
/// `ε ~ N(0, (init_variance·perturb_factor)²)` per coordinate from the
/// worker's own stream, clamps to `bounds` and resets the variance.
#[allow(clippy::too_many_arguments)]
pub fn warm_start(
    workers: &mut [WorkerState],
    streams: &mut [RngStream],
    centroid_plan: &[f64],
    action_dim: usize,
    init_variance: f64,
    perturb_factor: f64,
    bounds: &Bounds,
    skip: &[usize],
) -> Result<()> {
    Error::check_dim(workers.len(), streams.len())?;
    let shifted = shift_plan(centroid_plan, action_dim);
    let scale = init_variance * perturb_factor;
    let noise = Normal::new(0.0, scale).map_err(|e| Error::InvalidConfig(format!("perturbation scale: {e}")))?;
    for (w, rng) in workers.iter_mut().zip(streams.iter_mut()) {
        if skip.contains(&w.id) {
            continue;
        }
        Error::check_dim(shifted.len(), w.dist.dim())?;
        let mean = w.dist.mean_mut();
        for (m, c) in mean.iter_mut().zip(&shifted) {
            *m = if scale > 0.0 { c + noise.sample(rng) } else { *c };
        }
        bounds.clamp(mean);
        w.dist.fill_variance(init_variance);
    }
    Ok(())
}

fn shift_own(workers: &mut [WorkerState], action_dim: usize, init_variance: f64, skip: &[usize]) {
    for w in workers.iter_mut() {
        if skip.contains(&w.id) {
            continue;
        }
        let shifted = shift_plan(w.dist.mean(), action_dim);
        w.dist.mean_mut().copy_from_slice(&shifted);
        w.dist.fill_variance(init_variance);
    }
}

/// Worker plans before the first control step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialPlans {
    /// Zero actions plus the warm-start perturbation.
    Zero,
    /// Every action drawn uniformly from the action bounds (stream 0).
    UniformInBounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    /// Worker CEM settings; `max_iterations` is the number of inner rounds
    /// per control step.
    pub cem: CemConfig,
    pub n_workers: usize,
    /// Planning horizon `H` in steps.
    pub horizon: usize,
    /// Control steps per episode.
    pub task_horizon: usize,
    /// Run score-and-replace every this many control steps; `None` never.
    pub replace_period: Option<usize>,
    pub warm_start: WarmStart,
    pub perturb_factor: f64,
    pub initial_plans: InitialPlans,
    /// Keep every worker plan and the centroid plan every this many steps.
    pub snapshot_every: Option<usize>,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            cem: CemConfig {
                sampler: Some(SamplerKind::Proxy),
                ..CemConfig::default()
            },
            n_workers: 5,
            horizon: 200,
            task_horizon: 80,
            replace_period: Some(1),
            warm_start: WarmStart::Centroid,
            perturb_factor: 1.0,
            initial_plans: InitialPlans::UniformInBounds,
            snapshot_every: None,
        }
    }
}

impl MpcConfig {
    /// Same settings with independent workers: own-plan warm start and no
    /// replacement.
    pub fn decentralized(&self) -> Self {
        Self {
            replace_period: None,
            warm_start: WarmStart::ShiftOwn,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cem.validate()?;
        let mut problems = Vec::new();
        if self.n_workers == 0 {
            problems.push("n_workers must be >= 1".to_string());
        }
        if self.horizon == 0 {
            problems.push("horizon must be >= 1".to_string());
        }
        if self.task_horizon == 0 {
            problems.push("task_horizon must be >= 1".to_string());
        }
        if self.replace_period == Some(0) {
            problems.push("replace_period must be >= 1".to_string());
        }
        if self.replace_period.is_some() && self.cem.replace_per_iteration >= self.n_workers {
            problems.push("replace_per_iteration must be below n_workers".to_string());
        }
        if !(self.perturb_factor >= 0.0) || !self.perturb_factor.is_finite() {
            problems.push(format!("perturb_factor must be >= 0, got {}", self.perturb_factor));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    /// Running cost of the state reached.
    pub stage_cost: f64,
    /// Population mean cost of every worker after the inner rounds.
    pub worker_costs: Vec<f64>,
    /// Rollout cost of every worker's mean plan.
    pub plan_costs: Vec<f64>,
    pub information_radius: f64,
    pub best_worker: usize,
    pub replaced: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanSnapshot {
    pub step: usize,
    pub workers: Vec<Vec<Vec<f64>>>,
    pub centroid: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpisodeTiming {
    /// Inside the rollout cost.
    pub cost_eval: Duration,
    /// Warm start, centroid, scores, replacement and best-worker choice.
    pub wrapper: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// `task_horizon + 1` states when the episode completes.
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub steps: Vec<StepRecord>,
    pub failed: bool,
    pub failure: Option<String>,
    pub replacement_calls: usize,
    pub snapshots: Vec<PlanSnapshot>,
    pub timing: EpisodeTiming,
}

impl Episode {
    /// Per-step mean of the workers' population mean costs, averaged over
    /// the episode.
    pub fn average_cost(&self) -> f64 {
        mean(self.steps.iter().map(|s| mean(s.worker_costs.iter().copied())))
    }

    /// Per-step lowest worker cost, averaged over the episode.
    pub fn best_cost(&self) -> f64 {
        mean(self.steps.iter().map(|s| s.worker_costs.iter().copied().fold(f64::INFINITY, f64::min)))
    }

    pub fn executed_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.stage_cost).sum()
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// One closed-loop episode from `env.start`.
pub fn mpc_episode<D: Dynamics>(env: &RolloutEnv<D>, cfg: &MpcConfig, seed: u64) -> Result<Episode> {
    env.validate()?;
    cfg.validate()?;
    let episode_start = Instant::now();
    let a = env.action_dim();
    let dim = cfg.horizon * a;
    let bounds = env.plan_bounds(cfg.horizon);
    let mut coupler = Coupler::new(&cfg.cem, dim)?;
    coupler.sampler = cfg.cem.sampler.unwrap_or(SamplerKind::Proxy);
    // Fixed-variance compliance: replacement moves the mean block only.
    coupler.reset_variance = None;
    let v0 = cfg.cem.init_variance;

    let mut streams: Vec<RngStream> = (0..cfg.n_workers).map(|i| RngStream::derive(seed, i as u64 + 1)).collect();
    let mut workers: Vec<WorkerState> = (0..cfg.n_workers)
        .map(|id| Ok(WorkerState::new(id, DiagGaussian::isotropic(vec![0.0; dim], v0)?)))
        .collect::<Result<_>>()?;
    match cfg.initial_plans {
        InitialPlans::Zero => {
            let zero = vec![0.0; dim];
            warm_start(&mut workers, &mut streams, &zero, a, v0, cfg.perturb_factor, &bounds, &[])?;
        }
        InitialPlans::UniformInBounds => {
            let mut init_rng = RngStream::derive(seed, 0);
            for w in workers.iter_mut() {
                let plan = bounds.sample(&mut init_rng);
                w.dist.mean_mut().copy_from_slice(&plan);
            }
        }
    }

    let mut episode = Episode {
        states: vec![env.start.clone()],
        actions: Vec::new(),
        steps: Vec::new(),
        failed: false,
        failure: None,
        replacement_calls: 0,
        snapshots: Vec::new(),
        timing: EpisodeTiming::default(),
    };
    let mut centroid: Option<Centroid> = None;
    let mut respawned: Vec<usize> = Vec::new();

    for t in 0..cfg.task_horizon {
        let x = episode.states.last().expect("non-empty").clone();

        let wrap = Instant::now();
        if t > 0 {
            match (cfg.warm_start, &centroid) {
                (WarmStart::Centroid, Some(c)) => {
                    warm_start(&mut workers, &mut streams, &c.eta, a, v0, cfg.perturb_factor, &bounds, &respawned)?
                }
                _ => shift_own(&mut workers, a, v0, &respawned),
            }
            // A respawned worker's fresh mean is kept but still shifted in time.
            for w in workers.iter_mut().filter(|w| respawned.contains(&w.id)) {
                let shifted = shift_plan(w.dist.mean(), a);
                w.dist.mean_mut().copy_from_slice(&shifted);
                w.dist.fill_variance(v0);
            }
        }
        episode.timing.wrapper += wrap.elapsed();

        let cost = |u: &[f64]| rollout_cost(env, &x, u);
        for (w, rng) in workers.iter_mut().zip(streams.iter_mut()) {
            for _ in 0..cfg.cem.max_iterations {
                let id = w.id;
                let report = cem_iterate(w, &cost, &cfg.cem, Some(&bounds), rng).map_err(|e| e.for_worker(id))?;
                episode.timing.cost_eval += report.cost_time;
            }
        }

        let wrap = Instant::now();
        let best = best_worker_index(&workers).ok_or(Error::Empty("worker costs"))?;
        let mut action = workers[best].dist.mean()[..a].to_vec();
        env.action_bounds.clamp(&mut action);
        let best_id = workers[best].id;
        let worker_costs: Vec<f64> = workers.iter().map(|w| w.mean_cost().unwrap_or(f64::INFINITY)).collect();

        let replace_now = cfg.replace_period.is_some_and(|p| (t + 1) % p == 0) && cfg.n_workers >= 2;
        let (c, replaced) = if replace_now {
            let out = coupler.score_and_replace(&mut workers, &mut streams)?;
            episode.replacement_calls += 1;
            for w in workers.iter_mut().filter(|w| out.replaced.contains(&w.id)) {
                bounds.clamp(w.dist.mean_mut());
            }
            (out.centroid, out.replaced)
        } else {
            (coupler.weigh_and_center(&mut workers)?, Vec::new())
        };
        episode.timing.wrapper += wrap.elapsed();

        let plan_costs: Vec<f64> = workers.iter().map(|w| rollout_cost(env, &x, w.dist.mean())).collect();
        if cfg.snapshot_every.is_some_and(|k| t % k == 0) {
            episode.snapshots.push(PlanSnapshot {
                step: t,
                workers: workers.iter().map(|w| rollout(env, &x, w.dist.mean()).states).collect(),
                centroid: rollout(env, &x, &c.eta).states,
            });
        }

        let mut next = vec![0.0; env.state_dim()];
        env.dynamics.step(&x, &action, &mut next);
        let ir = c.information_radius;
        centroid = Some(c);
        respawned = replaced.clone();
        if next.iter().any(|v| !v.is_finite()) {
            episode.failed = true;
            episode.failure = Some(format!("state became non-finite at step {t}"));
            break;
        }
        episode.steps.push(StepRecord {
            state: x,
            stage_cost: env.step_cost(&next),
            action: action.clone(),
            worker_costs,
            plan_costs,
            information_radius: ir,
            best_worker: best_id,
            replaced,
        });
        episode.actions.push(action);
        episode.states.push(next);
    }
    episode.timing.total = episode_start.elapsed();
    Ok(episode)
}
