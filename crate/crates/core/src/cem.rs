//! Cross-entropy method workers and the two ensemble drivers.
//!
//! [`cem_iterate`] is one elite-fit update of a single diagonal-Gaussian
//! worker. [`decentralized_run`] runs independent workers and reports the
//! best one; [`bc_evocem_run`] adds the centroid-guided score-and-replace
//! step after every round of worker updates.
//!
//! Randomness: stream 0 of the master seed draws the initial worker means,
//! stream `id + 1` belongs to worker `id` for its whole life (sampling and
//! respawning), so results do not depend on evaluation order.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::centroid::{performance_weights_into, workers_centroid, Centroid, Temperature, WorkerState};
use crate::error::{Error, Result};
use crate::expfam::{DiagGaussian, FixedVarianceGaussian, Potential};
use crate::rng::RngStream;
use crate::trust_region::{diag_box_sample_into, SamplerKind, TrustRegion};

/// Axis-aligned box, used for initial means and for clamping samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Error::check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::Empty("bounds"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidConfig(format!("bounds must satisfy lower <= upper: {lower:?} / {upper:?}")));
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| l <= v && v <= u)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| if l == u { *l } else { rng.random_range(*l..*u) })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemConfig {
    /// Samples per worker per iteration (`N`).
    pub population_size: usize,
    pub elite_fraction: f64,
    /// `param ← α·old + (1−α)·MLE`.
    pub smoothing: f64,
    pub init_variance: f64,
    /// Keep every worker's variance at `init_variance` and adapt the mean only.
    pub freeze_variance: bool,
    /// Iterations `T`.
    pub max_iterations: usize,
    pub variance_floor: f64,
    /// Trust-region radius `Δ`.
    pub trust_radius: f64,
    pub replace_per_iteration: usize,
    pub temperature: Temperature,
    /// `None` selects [`SamplerKind::auto`].
    pub sampler: Option<SamplerKind>,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            elite_fraction: 0.1,
            smoothing: 0.1,
            init_variance: 0.1,
            freeze_variance: false,
            max_iterations: 5,
            variance_floor: crate::expfam::VARIANCE_FLOOR,
            trust_radius: 0.5,
            replace_per_iteration: 1,
            temperature: Temperature::default(),
            sampler: None,
        }
    }
}

impl CemConfig {
    pub fn elite_count(&self) -> usize {
        ((self.population_size as f64 * self.elite_fraction).floor() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.population_size == 0 {
            problems.push("population_size must be >= 1".to_string());
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            problems.push(format!("elite_fraction must be in (0, 1], got {}", self.elite_fraction));
        } else if (self.population_size as f64 * self.elite_fraction).floor() < 1.0 {
            problems.push("floor(population_size * elite_fraction) must be >= 1".to_string());
        }
        if !(self.smoothing >= 0.0 && self.smoothing < 1.0) {
            problems.push(format!("smoothing must be in [0, 1), got {}", self.smoothing));
        }
        if !(self.init_variance > 0.0) || !self.init_variance.is_finite() {
            problems.push(format!("init_variance must be positive, got {}", self.init_variance));
        }
        if self.max_iterations == 0 {
            problems.push("max_iterations must be >= 1".to_string());
        }
        if !(self.variance_floor > 0.0) {
            problems.push(format!("variance_floor must be positive, got {}", self.variance_floor));
        }
        if !(self.trust_radius > 0.0) || !self.trust_radius.is_finite() {
            problems.push(format!("trust_radius must be positive, got {}", self.trust_radius));
        }
        if self.replace_per_iteration == 0 {
            problems.push("replace_per_iteration must be >= 1".to_string());
        }
        match self.temperature {
            Temperature::Fixed(t) | Temperature::Adaptive(t) if !(t > 0.0) || !t.is_finite() => {
                problems.push(format!("temperature must be positive, got {t}"))
            }
            _ => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }

    /// Geometry used for the centroid and trust region: the diagonal
    /// Gaussian with the variance frozen at `init_variance`.
    pub fn geometry(&self, dim: usize) -> Result<FixedVarianceGaussian> {
        FixedVarianceGaussian::isotropic(dim, self.init_variance)
    }

    pub fn sampler_kind(&self) -> SamplerKind {
        self.sampler.unwrap_or(SamplerKind::auto(true, 0))
    }
}

/// What one [`cem_iterate`] call saw.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateReport {
    pub evaluations: usize,
    pub non_finite: usize,
    pub best_cost: f64,
    pub best_sample: Vec<f64>,
    pub elite_count: usize,
    pub max_elite_cost: f64,
    /// `+∞` when every finite sample is an elite.
    pub min_non_elite_cost: f64,
    /// Elite-set information radius under the fixed-variance geometry
    /// `σ² = init_variance`: `½ Σ_d var_d / σ²`.
    pub elite_radius: f64,
    pub cost_time: Duration,
}

/// One CEM update of `worker` in place.
///
/// Draws `N` candidates (clamped to `bounds` when given), ranks them by cost
/// with ties broken by sample index, fits mean and variance to the lowest
/// `⌊N·elite_fraction⌋` and blends the fit with the previous parameters.
/// Non-finite costs are discarded; more than half of them is an error.
pub fn cem_iterate<F, R>(
    worker: &mut WorkerState,
    cost: &F,
    cfg: &CemConfig,
    bounds: Option<&Bounds>,
    rng: &mut R,
) -> Result<IterateReport>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
    R: Rng + ?Sized,
{
    let d = worker.dist.dim();
    let n = cfg.population_size;
    if let Some(b) = bounds {
        Error::check_dim(d, b.dim())?;
    }
    let mut samples = vec![0.0; n * d];
    {
        let (mean, var) = (worker.dist.mean(), worker.dist.variance());
        let std: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
        for x in samples.chunks_exact_mut(d) {
            for (i, xi) in x.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *xi = mean[i] + std[i] * z;
            }
            if let Some(b) = bounds {
                b.clamp(x);
            }
        }
    }

    let start = Instant::now();
    let costs: Vec<f64> = samples.chunks_exact(d).map(cost).collect();
    let cost_time = start.elapsed();

    let non_finite = costs.iter().filter(|c| !c.is_finite()).count();
    if 2 * non_finite > n {
        return Err(Error::TooManyNonFinite { non_finite, total: n });
    }
    let mut order: Vec<usize> = (0..n).filter(|&j| costs[j].is_finite()).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
    let k = cfg.elite_count().min(order.len());
    let elites = &order[..k];

    let mut mle_mean = vec![0.0; d];
    for &j in elites {
        for (m, x) in mle_mean.iter_mut().zip(&samples[j * d..(j + 1) * d]) {
            *m += x;
        }
    }
    mle_mean.iter_mut().for_each(|m| *m /= k as f64);
    let mut mle_var = vec![0.0; d];
    for &j in elites {
        for ((v, x), m) in mle_var.iter_mut().zip(&samples[j * d..(j + 1) * d]).zip(&mle_mean) {
            *v += (x - m) * (x - m);
        }
    }
    mle_var.iter_mut().for_each(|v| *v /= k as f64);
    let elite_radius = 0.5 * mle_var.iter().sum::<f64>() / cfg.init_variance;

    let alpha = cfg.smoothing;
    for (m, new) in worker.dist.mean_mut().iter_mut().zip(&mle_mean) {
        *m = alpha * *m + (1.0 - alpha) * new;
    }
    if !worker.dist.variance_frozen {
        let blended: Vec<f64> = worker
            .dist
            .variance()
            .iter()
            .zip(&mle_var)
            .map(|(old, new)| alpha * old + (1.0 - alpha) * new)
            .collect();
        worker.dist.set_variance(&blended, cfg.variance_floor);
    }

    let best = order[0];
    let report = IterateReport {
        evaluations: n,
        non_finite,
        best_cost: costs[best],
        best_sample: samples[best * d..(best + 1) * d].to_vec(),
        elite_count: k,
        max_elite_cost: costs[elites[k - 1]],
        min_non_elite_cost: order.get(k).map_or(f64::INFINITY, |&j| costs[j]),
        elite_radius,
        cost_time,
    };
    worker.record_costs(costs);
    Ok(report)
}

/// Per-iteration trace of an ensemble run.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    /// Best single sample cost seen so far.
    pub best_cost: f64,
    /// Average of the workers' population mean costs.
    pub mean_cost: f64,
    /// Ensemble information radius before replacement (0 for one worker).
    pub information_radius: f64,
    /// Average elite-set radius over workers.
    pub elite_radius: f64,
    /// Worker ids respawned this iteration.
    pub replaced: Vec<usize>,
    /// Radius after replacement with unchanged weights.
    pub ir_after_replacement: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timing {
    /// Time spent inside the cost function.
    pub cost_eval: Duration,
    /// Weights, centroid, scores and replacement.
    pub coupling: Duration,
    /// Wall time of each iteration, diagnostics included.
    pub iterations: Vec<Duration>,
}

#[derive(Debug, Clone)]
pub struct EnsembleState {
    pub workers: Vec<WorkerState>,
    pub centroid: Option<Centroid>,
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
    pub evaluations: u64,
    pub best_cost: f64,
    pub best_sample: Vec<f64>,
    pub timing: Timing,
}

impl EnsembleState {
    /// Worker with the lowest population mean cost (ties: lowest id).
    pub fn best_worker(&self) -> &WorkerState {
        best_worker_index(&self.workers).map_or(&self.workers[0], |i| &self.workers[i])
    }

    /// Mean of [`Self::best_worker`].
    pub fn solution(&self) -> &[f64] {
        self.best_worker().dist.mean()
    }
}

/// Index of the worker with the lowest mean cost; ties go to the lowest id.
pub fn best_worker_index(workers: &[WorkerState]) -> Option<usize> {
    workers
        .iter()
        .enumerate()
        .filter_map(|(i, w)| w.mean_cost().map(|c| (i, c, w.id)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)))
        .map(|(i, _, _)| i)
}

/// Fresh workers with means drawn uniformly from `init_box` (stream 0) and
/// their private streams.
pub fn spawn_workers(
    n_workers: usize,
    init_box: &Bounds,
    cfg: &CemConfig,
    seed: u64,
) -> Result<(Vec<WorkerState>, Vec<RngStream>)> {
    let mut init_rng = RngStream::derive(seed, 0);
    let mut workers = Vec::with_capacity(n_workers);
    let mut streams = Vec::with_capacity(n_workers);
    for id in 0..n_workers {
        let mean = init_box.sample(&mut init_rng);
        let mut dist = DiagGaussian::isotropic(mean, cfg.init_variance)?;
        dist.variance_frozen = cfg.freeze_variance;
        workers.push(WorkerState::new(id, dist));
        streams.push(RngStream::derive(seed, id as u64 + 1));
    }
    Ok((workers, streams))
}

/// Outcome of one score-and-replace step.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplaceOutcome {
    /// Centroid before replacement.
    pub centroid: Centroid,
    /// Ids of respawned workers, lowest score first.
    pub replaced: Vec<usize>,
}

/// Weights, centroid, relevance scores and trust-region respawning for an
/// ensemble under fixed-variance geometry. Buffers are kept between calls
/// since this runs once per iteration.
#[derive(Debug, Clone)]
pub struct Coupler {
    pub geometry: FixedVarianceGaussian,
    pub temperature: Temperature,
    pub trust_radius: f64,
    pub replace_count: usize,
    pub sampler: SamplerKind,
    /// Variance given to respawned workers; `None` leaves it untouched.
    pub reset_variance: Option<f64>,
    costs: Vec<f64>,
    sorted: Vec<f64>,
    weights: Vec<f64>,
    scores: Vec<f64>,
    order: Vec<usize>,
}

impl Coupler {
    /// Settings from `cfg` for a problem of dimension `dim`, resetting
    /// respawned variances to `init_variance`.
    pub fn new(cfg: &CemConfig, dim: usize) -> Result<Self> {
        Ok(Self {
            geometry: cfg.geometry(dim)?,
            temperature: cfg.temperature,
            trust_radius: cfg.trust_radius,
            replace_count: cfg.replace_per_iteration,
            sampler: cfg.sampler_kind(),
            reset_variance: Some(cfg.init_variance),
            costs: Vec::new(),
            sorted: Vec::new(),
            weights: Vec::new(),
            scores: Vec::new(),
            order: Vec::new(),
        })
    }

    /// Relevance scores from the last [`Self::score_and_replace`], by worker
    /// position.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Sets performance weights from the workers' mean costs and returns
    /// the ensemble centroid. Every worker must have sampled at least once.
    pub fn weigh_and_center(&mut self, workers: &mut [WorkerState]) -> Result<Centroid> {
        if workers.is_empty() {
            return Err(Error::Empty("ensemble"));
        }
        self.costs.clear();
        for w in workers.iter() {
            Error::check_dim(self.geometry.dim(), w.dist.dim())?;
            let c = w.mean_cost().ok_or_else(|| Error::Empty("population costs").for_worker(w.id))?;
            self.costs.push(c);
        }
        let t = self.temperature.resolve_with(&self.costs, &mut self.sorted);
        performance_weights_into(&self.costs, t, &mut self.weights)?;
        for (w, x) in workers.iter_mut().zip(&self.weights) {
            w.weight = *x;
        }
        // Closed form of `workers_centroid`: η = μ, weights already sum to one.
        let mut eta = vec![0.0; self.geometry.dim()];
        for w in workers.iter() {
            for (c, m) in eta.iter_mut().zip(w.dist.mean()) {
                *c += w.weight * m;
            }
        }
        if !self.geometry.in_mean_domain(&eta) {
            return Err(Error::Domain(format!("centroid {eta:?}")));
        }
        let information_radius = workers
            .iter()
            .map(|w| w.weight * self.geometry.mean_divergence(&eta, w.dist.mean()))
            .sum();
        Ok(Centroid {
            theta: self.geometry.conjugate_gradient(&eta),
            eta,
            information_radius,
        })
    }

    /// Respawns the `replace_count` lowest-relevance workers inside the
    /// trust region around the centroid. Only the mean block is resampled.
    pub fn score_and_replace(&mut self, workers: &mut [WorkerState], streams: &mut [RngStream]) -> Result<ReplaceOutcome> {
        Error::check_dim(workers.len(), streams.len())?;
        let count = self.replace_count;
        if count >= workers.len() {
            return Err(Error::InvalidConfig(format!(
                "cannot replace {count} of {} workers; at least one must survive",
                workers.len()
            )));
        }
        if !(self.trust_radius > 0.0) || !self.trust_radius.is_finite() {
            return Err(Error::InvalidConfig(format!("trust radius must be positive, got {}", self.trust_radius)));
        }
        let centroid = self.weigh_and_center(workers)?;
        self.scores.clear();
        self.scores.extend(workers.iter().map(|w| {
            if w.weight == 0.0 {
                0.0
            } else {
                w.weight * self.geometry.mean_divergence(&centroid.eta, w.dist.mean())
            }
        }));
        self.order.clear();
        self.order.extend(0..workers.len());
        let scores = &self.scores;
        self.order
            .sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(workers[a].id.cmp(&workers[b].id)));
        let region = match self.sampler {
            SamplerKind::DiagBox => None,
            _ => Some(TrustRegion::new(&self.geometry, centroid.eta.clone(), self.trust_radius)?),
        };
        let mut replaced = Vec::with_capacity(count);
        for &i in &self.order[..count] {
            let id = workers[i].id;
            match &region {
                None => diag_box_sample_into(
                    &centroid.eta,
                    self.trust_radius,
                    self.geometry.variance(),
                    &mut streams[i],
                    workers[i].dist.mean_mut(),
                ),
                Some(region) => region
                    .sample(self.sampler, &mut streams[i])
                    .map(|eta| workers[i].dist.mean_mut().copy_from_slice(&eta)),
            }
            .map_err(|e| e.for_worker(id))?;
            if let Some(v) = self.reset_variance {
                workers[i].dist.fill_variance(v);
            }
            replaced.push(id);
        }
        Ok(ReplaceOutcome { centroid, replaced })
    }
}

/// Information radius of the workers as they stand, with their current
/// weights.
pub fn ensemble_radius(geometry: &FixedVarianceGaussian, workers: &[WorkerState]) -> Result<f64> {
    Ok(workers_centroid(geometry, workers)?.information_radius)
}

struct Round {
    best_cost: f64,
    best_sample: Vec<f64>,
    elite_radius: f64,
}

fn update_all<F>(
    workers: &mut [WorkerState],
    streams: &mut [RngStream],
    cost: &F,
    cfg: &CemConfig,
    state_eval: &mut u64,
    timing: &mut Timing,
) -> Result<Round>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let mut round = Round {
        best_cost: f64::INFINITY,
        best_sample: Vec::new(),
        elite_radius: 0.0,
    };
    for (w, rng) in workers.iter_mut().zip(streams.iter_mut()) {
        let id = w.id;
        let report = cem_iterate(w, cost, cfg, None, rng).map_err(|e| e.for_worker(id))?;
        *state_eval += report.evaluations as u64;
        timing.cost_eval += report.cost_time;
        round.elite_radius += report.elite_radius;
        if report.best_cost < round.best_cost {
            round.best_cost = report.best_cost;
            round.best_sample = report.best_sample;
        }
    }
    round.elite_radius /= workers.len() as f64;
    Ok(round)
}

fn average_mean_cost(workers: &[WorkerState]) -> f64 {
    let costs: Vec<f64> = workers.iter().filter_map(|w| w.mean_cost()).collect();
    costs.iter().sum::<f64>() / costs.len().max(1) as f64
}

#[derive(Clone, Copy, PartialEq)]
enum Coupling {
    Independent,
    Guided,
}

fn run_ensemble<F>(
    n_workers: usize,
    cost: &F,
    init_box: &Bounds,
    cfg: &CemConfig,
    seed: u64,
    coupling: Coupling,
) -> Result<EnsembleState>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    cfg.validate()?;
    if n_workers == 0 {
        return Err(Error::InvalidConfig("n_workers must be >= 1".into()));
    }
    if coupling == Coupling::Guided {
        if n_workers < 2 {
            return Err(Error::InvalidConfig("guided ensemble needs at least 2 workers".into()));
        }
        if cfg.replace_per_iteration >= n_workers {
            return Err(Error::InvalidConfig(format!(
                "replace_per_iteration ({}) must be below n_workers ({n_workers})",
                cfg.replace_per_iteration
            )));
        }
    }
    let mut coupler = Coupler::new(cfg, init_box.dim())?;
    let (workers, mut streams) = spawn_workers(n_workers, init_box, cfg, seed)?;
    let mut state = EnsembleState {
        workers,
        centroid: None,
        iteration: 0,
        history: Vec::with_capacity(cfg.max_iterations),
        evaluations: 0,
        best_cost: f64::INFINITY,
        best_sample: Vec::new(),
        timing: Timing::default(),
    };

    for t in 1..=cfg.max_iterations {
        let iteration_start = Instant::now();
        let round = update_all(
            &mut state.workers,
            &mut streams,
            cost,
            cfg,
            &mut state.evaluations,
            &mut state.timing,
        )?;
        if round.best_cost < state.best_cost {
            state.best_cost = round.best_cost;
            state.best_sample = round.best_sample;
        }
        let mean_cost = average_mean_cost(&state.workers);

        let (centroid, replaced, ir_after) = match coupling {
            Coupling::Guided => {
                let start = Instant::now();
                let out = coupler.score_and_replace(&mut state.workers, &mut streams)?;
                state.timing.coupling += start.elapsed();
                let after = ensemble_radius(&coupler.geometry, &state.workers)?;
                (out.centroid, out.replaced, after)
            }
            Coupling::Independent => {
                // Diagnostics only: weights are recorded but nothing flows
                // back into the workers' distributions.
                let c = coupler.weigh_and_center(&mut state.workers)?;
                let ir = c.information_radius;
                (c, Vec::new(), ir)
            }
        };
        state.history.push(IterationRecord {
            iteration: t,
            best_cost: state.best_cost,
            mean_cost,
            information_radius: centroid.information_radius,
            elite_radius: round.elite_radius,
            replaced,
            ir_after_replacement: ir_after,
        });
        state.centroid = Some(centroid);
        state.iteration = t;
        state.timing.iterations.push(iteration_start.elapsed());
    }
    Ok(state)
}

/// Independent workers, no information exchange.
pub fn decentralized_run<F>(n_workers: usize, cost: &F, init_box: &Bounds, cfg: &CemConfig, seed: u64) -> Result<EnsembleState>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    run_ensemble(n_workers, cost, init_box, cfg, seed, Coupling::Independent)
}

/// Single-worker CEM.
pub fn vanilla_run<F>(cost: &F, init_box: &Bounds, cfg: &CemConfig, seed: u64) -> Result<EnsembleState>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    decentralized_run(1, cost, init_box, cfg, seed)
}

/// Centroid-guided ensemble: after every round of worker updates the
/// `replace_per_iteration` lowest-relevance workers are respawned from the
/// trust region around the performance-weighted centroid, with variance
/// reset to `init_variance`.
pub fn bc_evocem_run<F>(n_workers: usize, cost: &F, init_box: &Bounds, cfg: &CemConfig, seed: u64) -> Result<EnsembleState>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    run_ensemble(n_workers, cost, init_box, cfg, seed, Coupling::Guided)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(target: [f64; 2]) -> impl Fn(&[f64]) -> f64 {
        move |x: &[f64]| (x[0] - target[0]).powi(2) + (x[1] - target[1]).powi(2)
    }

    #[test]
    fn smoothing_blends_old_and_elite_fit() {
        let start = WorkerState::new(0, DiagGaussian::isotropic(vec![1.0, 2.0], 0.5).unwrap());
        let cost = sphere([3.0, -2.0]);
        let run = |alpha: f64| {
            let cfg = CemConfig {
                smoothing: alpha,
                ..CemConfig::default()
            };
            let mut w = start.clone();
            cem_iterate(&mut w, &cost, &cfg, None, &mut RngStream::new(1)).unwrap();
            w.dist
        };
        let mle = run(0.0);
        let half = run(0.5);
        for i in 0..2 {
            let m = 0.5 * start.dist.mean()[i] + 0.5 * mle.mean()[i];
            let v = 0.5 * start.dist.variance()[i] + 0.5 * mle.variance()[i];
            assert!((half.mean()[i] - m).abs() < 1e-12);
            assert!((half.variance()[i] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn converges_on_quadratic() {
        let cfg = CemConfig {
            init_variance: 1.0,
            ..CemConfig::default()
        };
        let mut w = WorkerState::new(0, DiagGaussian::isotropic(vec![0.0, 0.0], 1.0).unwrap());
        let mut rng = RngStream::new(2);
        for _ in 0..30 {
            cem_iterate(&mut w, &sphere([3.0, -2.0]), &cfg, None, &mut rng).unwrap();
        }
        let m = w.dist.mean();
        assert!((m[0] - 3.0).hypot(m[1] + 2.0) < 0.05, "{m:?}");
    }

    #[test]
    fn elites_are_the_cheapest() {
        let cfg = CemConfig::default();
        let mut w = WorkerState::new(0, DiagGaussian::isotropic(vec![0.0, 0.0], 1.0).unwrap());
        let mut rng = RngStream::new(3);
        for _ in 0..10 {
            let r = cem_iterate(&mut w, &sphere([1.0, 1.0]), &cfg, None, &mut rng).unwrap();
            assert_eq!(r.elite_count, 10);
            assert!(r.max_elite_cost <= r.min_non_elite_cost);
            assert_eq!(w.population_costs().len(), 100);
        }
    }

    #[test]
    fn constant_cost_does_not_inflate_variance() {
        let cfg = CemConfig {
            init_variance: 0.5,
            ..CemConfig::default()
        };
        let mut total_var = 0.0;
        let mut max_shift: f64 = 0.0;
        let reps = 200;
        for seed in 0..reps {
            let mut w = WorkerState::new(0, DiagGaussian::isotropic(vec![0.0, 0.0], 0.5).unwrap());
            let mut rng = RngStream::new(seed);
            cem_iterate(&mut w, &|_: &[f64]| 1.0, &cfg, None, &mut rng).unwrap();
            total_var += w.dist.variance().iter().sum::<f64>() / 2.0;
            max_shift = max_shift.max(w.dist.mean()[0].abs()).max(w.dist.mean()[1].abs());
        }
        assert!(total_var / reps as f64 <= 0.5);
        // elite mean of 10 draws: sd = √(0.5/10) ≈ 0.22, scaled by 0.9
        assert!(max_shift < 5.0 * 0.9 * (0.5f64 / 10.0).sqrt());
    }

    #[test]
    fn non_finite_costs() {
        let cfg = CemConfig::default();
        let mut w = WorkerState::new(0, DiagGaussian::isotropic(vec![0.0], 1.0).unwrap());
        let mut rng = RngStream::new(4);
        // negative half-line is infeasible: about half the samples
        let partly = |x: &[f64]| if x[0] < -1.0 { f64::NAN } else { x[0] * x[0] };
        let r = cem_iterate(&mut w, &partly, &cfg, None, &mut rng).unwrap();
        assert!(r.non_finite > 0);
        assert!(r.best_cost.is_finite() && r.max_elite_cost.is_finite());
        let mostly = |_: &[f64]| f64::INFINITY;
        assert!(matches!(
            cem_iterate(&mut w, &mostly, &cfg, None, &mut rng),
            Err(Error::TooManyNonFinite { .. })
        ));
    }

    #[test]
    fn bounds_clamp_samples() {
        let cfg = CemConfig::default();
        let bounds = Bounds::uniform(2, -0.1, 0.1).unwrap();
        let mut w = WorkerState::new(0, DiagGaussian::isotropic(vec![0.0, 0.0], 4.0).unwrap());
        let mut rng = RngStream::new(5);
        let inside = |x: &[f64]| {
            assert!(x.iter().all(|v| v.abs() <= 0.1));
            0.0
        };
        cem_iterate(&mut w, &inside, &cfg, Some(&bounds), &mut rng).unwrap();
    }

    #[test]
    fn config_validation() {
        assert!(CemConfig::default().validate().is_ok());
        let bad = CemConfig {
            population_size: 5,
            elite_fraction: 0.1,
            smoothing: 1.0,
            ..CemConfig::default()
        };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("floor(population_size * elite_fraction)"));
        assert!(msg.contains("smoothing"));
    }

    #[test]
    fn single_worker_decentralized_is_vanilla() {
        let cfg = CemConfig {
            max_iterations: 8,
            ..CemConfig::default()
        };
        let b = Bounds::uniform(2, -2.0, 2.0).unwrap();
        let a = decentralized_run(1, &sphere([0.5, 0.5]), &b, &cfg, 9).unwrap();
        let v = vanilla_run(&sphere([0.5, 0.5]), &b, &cfg, 9).unwrap();
        assert_eq!(a.history, v.history);
        assert_eq!(a.workers, v.workers);
        assert_eq!(a.history[0].information_radius, 0.0);
    }

    #[test]
    fn guided_run_needs_survivor() {
        let cfg = CemConfig::default();
        let b = Bounds::uniform(2, -1.0, 1.0).unwrap();
        assert!(bc_evocem_run(1, &sphere([0.0, 0.0]), &b, &cfg, 0).is_err());
        let cfg = CemConfig {
            replace_per_iteration: 2,
            ..cfg
        };
        assert!(bc_evocem_run(2, &sphere([0.0, 0.0]), &b, &cfg, 0).is_err());
    }

    #[test]
    fn identical_pair_replaces_lowest_id() {
        let geometry = FixedVarianceGaussian::isotropic(2, 0.1).unwrap();
        let dist = DiagGaussian::isotropic(vec![0.5, -0.5], 0.1).unwrap();
        let mut workers: Vec<WorkerState> = (0..2)
            .map(|id| {
                let mut w = WorkerState::new(id, dist.clone());
                w.record_costs(vec![1.0, 2.0]);
                w
            })
            .collect();
        let mut streams = vec![RngStream::derive(0, 1), RngStream::derive(0, 2)];
        let cfg = CemConfig {
            init_variance: 0.1,
            trust_radius: 0.5,
            ..CemConfig::default()
        };
        let out = Coupler::new(&cfg, 2).unwrap().score_and_replace(&mut workers, &mut streams).unwrap();
        assert_eq!(out.centroid.eta, vec![0.5, -0.5]);
        assert_eq!(out.centroid.information_radius, 0.0);
        assert_eq!(out.replaced, vec![0]);
        assert_eq!(workers[1].dist, dist);
        assert_ne!(workers[0].dist.mean(), dist.mean());
        assert!(ensemble_radius(&geometry, &workers).unwrap() > 0.0);
    }

    #[test]
    fn vanishing_radius_respawns_at_centroid() {
        let cfg = CemConfig {
            trust_radius: 1e-14,
            max_iterations: 6,
            ..CemConfig::default()
        };
        let b = Bounds::uniform(2, -3.0, 3.0).unwrap();
        let mut coupler = Coupler::new(&cfg, 2).unwrap();
        let (mut workers, mut streams) = spawn_workers(4, &b, &cfg, 1).unwrap();
        let cost = sphere([1.0, 0.0]);
        for _ in 0..cfg.max_iterations {
            for (w, r) in workers.iter_mut().zip(streams.iter_mut()) {
                cem_iterate(w, &cost, &cfg, None, r).unwrap();
            }
            let out = coupler.score_and_replace(&mut workers, &mut streams).unwrap();
            let w = workers.iter().find(|w| w.id == out.replaced[0]).unwrap();
            let dist = w
                .dist
                .mean()
                .iter()
                .zip(&out.centroid.eta)
                .map(|(a, c)| (a - c).abs())
                .fold(0.0, f64::max);
            assert!(dist < 1e-6);
            assert_eq!(w.dist.variance(), &[cfg.init_variance; 2]);
        }
    }

    #[test]
    fn coupler_matches_generic_centroid_route() {
        use crate::centroid::{lowest_scores, performance_weights, relevance_scores, weighted_centroid};
        let cfg = CemConfig {
            init_variance: 0.3,
            ..CemConfig::default()
        };
        let b = Bounds::uniform(3, -2.0, 2.0).unwrap();
        let (mut workers, mut streams) = spawn_workers(6, &b, &cfg, 8).unwrap();
        let cost = sphere([0.5, 0.5]);
        for (w, r) in workers.iter_mut().zip(streams.iter_mut()) {
            cem_iterate(w, &|x: &[f64]| cost(x) + x[2].abs(), &cfg, None, r).unwrap();
        }
        let before = workers.clone();
        let mut coupler = Coupler::new(&cfg, 3).unwrap();
        let out = coupler.score_and_replace(&mut workers, &mut streams).unwrap();

        let costs: Vec<f64> = before.iter().map(|w| w.mean_cost().unwrap()).collect();
        let weights = performance_weights(&costs, cfg.temperature.resolve(&costs)).unwrap();
        let etas: Vec<&[f64]> = before.iter().map(|w| w.dist.mean()).collect();
        let reference = weighted_centroid(&coupler.geometry, &etas, &weights).unwrap();
        for (a, b) in out.centroid.eta.iter().zip(&reference.eta) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in out.centroid.theta.iter().zip(&reference.theta) {
            assert!((a - b).abs() < 1e-13);
        }
        assert!((out.centroid.information_radius - reference.information_radius).abs() < 1e-13);
        let scores = relevance_scores(&coupler.geometry, &etas, &weights, &reference).unwrap();
        for (a, b) in coupler.scores().iter().zip(&scores) {
            assert!((a - b).abs() < 1e-13);
        }
        let ids: Vec<usize> = before.iter().map(|w| w.id).collect();
        let expected: Vec<usize> = lowest_scores(&scores, &ids, 1).iter().map(|&i| ids[i]).collect();
        assert_eq!(out.replaced, expected);
        for (w, x) in workers.iter().zip(&weights) {
            assert!((w.weight - x).abs() < 1e-15);
        }
    }

    #[test]
    fn every_sampler_respawns_inside_the_region() {
        for kind in [SamplerKind::Exact, SamplerKind::Proxy, SamplerKind::DiagBox] {
            let cfg = CemConfig {
                sampler: Some(kind),
                trust_radius: 0.2,
                ..CemConfig::default()
            };
            let b = Bounds::uniform(2, -1.0, 1.0).unwrap();
            let (mut workers, mut streams) = spawn_workers(3, &b, &cfg, 2).unwrap();
            let mut coupler = Coupler::new(&cfg, 2).unwrap();
            for _ in 0..20 {
                for (w, r) in workers.iter_mut().zip(streams.iter_mut()) {
                    cem_iterate(w, &sphere([0.0, 0.0]), &cfg, None, r).unwrap();
                }
                let out = coupler.score_and_replace(&mut workers, &mut streams).unwrap();
                let w = workers.iter().find(|w| w.id == out.replaced[0]).unwrap();
                let d = coupler.geometry.mean_divergence(&out.centroid.eta, w.dist.mean());
                // the box bounds each axis by Δ, so the total by d·Δ
                let limit = if kind == SamplerKind::DiagBox { 0.2 * 2.0 } else { 0.2 };
                assert!(d <= limit * (1.0 + 1e-9), "{kind:?}: {d}");
            }
        }
    }

    #[test]
    fn budget_is_n_times_population_times_iterations() {
        let cfg = CemConfig {
            max_iterations: 7,
            population_size: 40,
            ..CemConfig::default()
        };
        let b = Bounds::uniform(2, -1.0, 1.0).unwrap();
        let counter = std::cell::Cell::new(0u64);
        let cost = |x: &[f64]| {
            counter.set(counter.get() + 1);
            x[0] * x[0] + x[1] * x[1]
        };
        let s = bc_evocem_run(3, &cost, &b, &cfg, 5).unwrap();
        assert_eq!(s.evaluations, 3 * 40 * 7);
        assert_eq!(counter.get(), 3 * 40 * 7);
        counter.set(0);
        let s = decentralized_run(3, &cost, &b, &cfg, 5).unwrap();
        assert_eq!(s.evaluations, 3 * 40 * 7);
        assert_eq!(counter.get(), 3 * 40 * 7);
    }

    #[test]
    fn history_and_best_so_far() {
        let cfg = CemConfig {
            max_iterations: 12,
            ..CemConfig::default()
        };
        let b = Bounds::uniform(2, -2.0, 2.0).unwrap();
        let s = bc_evocem_run(4, &sphere([1.0, -1.0]), &b, &cfg, 3).unwrap();
        assert_eq!(s.history.len(), s.iteration);
        assert_eq!(s.iteration, 12);
        for pair in s.history.windows(2) {
            assert!(pair[1].best_cost <= pair[0].best_cost);
        }
        assert!(s.history.iter().all(|r| r.replaced.len() == 1));
        assert_eq!(s.best_worker().mean_cost(), s.workers.iter().filter_map(|w| w.mean_cost()).reduce(f64::min));
    }
}
