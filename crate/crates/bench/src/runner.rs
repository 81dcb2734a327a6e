//! Runs benchmark specs over their seeds and collects metrics.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use bcevo::cem::{bc_evocem_run, decentralized_run, vanilla_run, CemConfig, EnsembleState, Timing};
use bcevo::mpc::{mpc_episode, Episode};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::metrics::{write_rows, MetricsRow, Summary};
use crate::objectives::{quadratic_cost, synthetic_cost};
use crate::spec::{BenchmarkSpec, Objective, Optimizer};

/// One seed of an iterative benchmark.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub evaluations: u64,
    pub best_cost: f64,
    pub best_sample: Vec<f64>,
    pub timing: Timing,
}

#[derive(Debug, Clone)]
pub struct BenchmarkResult {
    pub runs: Vec<SeedRun>,
    pub summary: Summary,
    /// Cost evaluations each seed is expected to use, `n·N·T`.
    pub budget: u64,
}

impl BenchmarkResult {
    pub fn rows(&self) -> Vec<MetricsRow> {
        self.runs.iter().flat_map(|r| r.rows.iter().cloned()).collect()
    }

    /// Seeds whose evaluation count differs from the budget.
    pub fn budget_violations(&self) -> Vec<u64> {
        self.runs.iter().filter(|r| r.evaluations != self.budget).map(|r| r.seed).collect()
    }

    pub fn coupling_overhead(&self) -> f64 {
        let (c, e) = self.runs.iter().fold((0.0, 0.0), |(c, e), r| {
            (c + r.timing.coupling.as_secs_f64(), e + r.timing.cost_eval.as_secs_f64())
        });
        c / e
    }
}

/// Evaluation budget for one seed: `workers · N · T`.
pub fn budget(spec: &BenchmarkSpec) -> u64 {
    (spec.workers * spec.cem.population_size * spec.cem.iterations) as u64
}

/// Optimizer configuration; the single vanilla worker samples
/// `workers · N` candidates per iteration so every optimizer spends the same
/// budget.
pub fn optimizer_config(spec: &BenchmarkSpec, optimizer: Optimizer) -> CemConfig {
    let mut cfg = spec.cem_config();
    if optimizer == Optimizer::Vanilla {
        cfg.population_size *= spec.workers;
    }
    cfg
}

pub fn run_seed(spec: &BenchmarkSpec, optimizer: Optimizer, seed: u64) -> Result<SeedRun> {
    let cost: fn(&[f64]) -> f64 = match spec.objective {
        Objective::SyntheticMultimodal => synthetic_cost,
        Objective::Quadratic => quadratic_cost,
        Objective::Navigation => {
            return Err(BenchError::Unsupported("navigation runs through run_navigation".into()));
        }
    };
    let init_box = spec.init_box()?;
    let cfg = optimizer_config(spec, optimizer);
    let state: EnsembleState = match optimizer {
        Optimizer::Vanilla => vanilla_run(&cost, &init_box, &cfg, seed)?,
        Optimizer::Decent => decentralized_run(spec.workers, &cost, &init_box, &cfg, seed)?,
        Optimizer::BcEvocem => bc_evocem_run(spec.workers, &cost, &init_box, &cfg, seed)?,
    };
    let single = state.workers.len() == 1;
    let rows = state
        .history
        .iter()
        .zip(&state.timing.iterations)
        .map(|(h, wall)| MetricsRow {
            seed,
            iteration: h.iteration,
            best_cost: h.best_cost,
            mean_cost: h.mean_cost,
            // A lone worker has no ensemble spread; its elite set stands in.
            ir: if single { h.elite_radius } else { h.information_radius },
            wall_ms: if spec.record_timing { wall.as_secs_f64() * 1e3 } else { 0.0 },
        })
        .collect();
    Ok(SeedRun {
        seed,
        rows,
        evaluations: state.evaluations,
        best_cost: state.best_cost,
        best_sample: state.best_sample,
        timing: state.timing,
    })
}

fn in_seed_order<T: Send>(seeds: &[u64], f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    seeds.par_iter().map(|&s| f(s)).collect::<Vec<_>>().into_iter().collect()
}

/// Runs `spec.optimizer` on every seed and writes the configured outputs.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkResult> {
    run_benchmark_with(spec, spec.optimizer)
}

pub fn run_benchmark_with(spec: &BenchmarkSpec, optimizer: Optimizer) -> Result<BenchmarkResult> {
    spec.validate()?;
    let runs = in_seed_order(&spec.seeds, |seed| run_seed(spec, optimizer, seed))?;
    let rows: Vec<MetricsRow> = runs.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    let result = BenchmarkResult {
        summary: Summary::from_rows(&rows, spec.probe_iteration),
        runs,
        budget: budget(spec),
    };
    if let Some(path) = &spec.output.csv {
        write_csv(path, &rows)?;
    }
    if let Some(path) = &spec.output.summary {
        let mut text = result.summary.to_text();
        text.push_str(&format!(
            "evaluations per seed: {} (budget {}, mismatched seeds: {:?})\n",
            result.runs.first().map_or(0, |r| r.evaluations),
            result.budget,
            result.budget_violations()
        ));
        std::fs::write(path, text).map_err(|e| BenchError::io(path, e))?;
    }
    Ok(result)
}

pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| BenchError::io(path, e))?;
    write_rows(BufWriter::new(file), rows)
}

/// One control step of a navigation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigationRow {
    pub seed: u64,
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub ux: f64,
    pub uy: f64,
    /// Mean over workers of the population mean cost.
    pub average_cost: f64,
    pub best_cost: f64,
    pub ir: f64,
}

pub fn navigation_rows(seed: u64, episode: &Episode) -> Vec<NavigationRow> {
    episode
        .steps
        .iter()
        .enumerate()
        .map(|(step, s)| NavigationRow {
            seed,
            step,
            x: s.state[0],
            y: s.state[1],
            ux: s.action[0],
            uy: s.action[1],
            average_cost: s.worker_costs.iter().sum::<f64>() / s.worker_costs.len() as f64,
            best_cost: s.worker_costs.iter().copied().fold(f64::INFINITY, f64::min),
            ir: s.information_radius,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct NavigationResult {
    pub episodes: Vec<(u64, Episode)>,
}

impl NavigationResult {
    pub fn rows(&self) -> Vec<NavigationRow> {
        self.episodes.iter().flat_map(|(s, e)| navigation_rows(*s, e)).collect()
    }
}

/// Closed-loop episodes for every seed, written to `output.csv` if set.
pub fn run_navigation(spec: &BenchmarkSpec, optimizer: Optimizer) -> Result<NavigationResult> {
    spec.validate()?;
    if spec.dimension != 2 {
        return Err(BenchError::Unsupported(format!("navigation is planar, got dimension {}", spec.dimension)));
    }
    let env = spec.environment()?;
    let cfg = spec.mpc_config(optimizer);
    let episodes = in_seed_order(&spec.seeds, |seed| Ok((seed, mpc_episode(&env, &cfg, seed)?)))?;
    let result = NavigationResult { episodes };
    if let Some(path) = &spec.output.csv {
        write_csv(path, &result.rows())?;
    }
    Ok(result)
}

/// Paired comparison of two optimizers on the same seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a: Optimizer,
    pub b: Optimizer,
    /// `(seed, metric for a, metric for b)`; lower is better.
    pub pairs: Vec<(u64, f64, f64)>,
}

impl Comparison {
    /// Seeds where `a` is strictly better.
    pub fn wins(&self) -> usize {
        self.pairs.iter().filter(|(_, a, b)| a < b).count()
    }

    pub fn mean_a(&self) -> f64 {
        self.pairs.iter().map(|p| p.1).sum::<f64>() / self.pairs.len() as f64
    }

    pub fn mean_b(&self) -> f64 {
        self.pairs.iter().map(|p| p.2).sum::<f64>() / self.pairs.len() as f64
    }

    /// Mean of the per-seed ratio `a / b`, the normalized cost of `a`.
    pub fn mean_ratio(&self) -> f64 {
        self.pairs.iter().map(|(_, a, b)| a / b).sum::<f64>() / self.pairs.len() as f64
    }
}

/// Final best cost for iterative objectives, episode average cost for
/// navigation.
pub fn compare(spec: &BenchmarkSpec, a: Optimizer, b: Optimizer) -> Result<Comparison> {
    let metric = |opt: Optimizer| -> Result<Vec<f64>> {
        Ok(match spec.objective {
            Objective::Navigation => run_navigation(spec, opt)?.episodes.iter().map(|(_, e)| e.average_cost()).collect(),
            _ => run_benchmark_with(spec, opt)?.runs.iter().map(|r| r.best_cost).collect(),
        })
    };
    let mut plain = spec.clone();
    plain.output = Default::default();
    let spec = &plain;
    let (ma, mb) = (metric(a)?, metric(b)?);
    Ok(Comparison {
        a,
        b,
        pairs: spec.seeds.iter().zip(ma.into_iter().zip(mb)).map(|(&s, (x, y))| (s, x, y)).collect(),
    })
}
