//! Per-iteration metrics, their CSV form and the summary fold.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const METRICS_HEADER: &str = "seed,iteration,best_cost,mean_cost,ir,wall_ms";

/// One row per `(seed, iteration)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub iteration: usize,
    /// Best cost seen so far in this run.
    pub best_cost: f64,
    pub mean_cost: f64,
    pub ir: f64,
    pub wall_ms: f64,
}

pub fn write_rows<W: Write, S: Serialize>(out: W, rows: &[S]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<MetricsRow>, _>>()?;
    Ok(rows)
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationSummary {
    pub iteration: usize,
    pub best_cost: Stat,
    pub mean_cost: Stat,
    pub ir: Stat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub seeds: usize,
    pub iterations: Vec<IterationSummary>,
    pub probe_iteration: usize,
    /// `None` when no row has the probe iteration.
    pub probe_ir: Option<Stat>,
}

impl Summary {
    /// Aggregates rows in any order; the result depends only on the set of
    /// rows, so it can be recomputed from a written CSV.
    pub fn from_rows(rows: &[MetricsRow], probe_iteration: usize) -> Self {
        let mut by_iter: BTreeMap<usize, BTreeMap<u64, &MetricsRow>> = BTreeMap::new();
        for r in rows {
            by_iter.entry(r.iteration).or_default().insert(r.seed, r);
        }
        let seeds = rows.iter().map(|r| r.seed).collect::<std::collections::BTreeSet<_>>().len();
        let iterations: Vec<IterationSummary> = by_iter
            .iter()
            .map(|(&iteration, seeds)| {
                let col = |f: fn(&MetricsRow) -> f64| seeds.values().map(|r| f(r)).collect::<Vec<_>>();
                IterationSummary {
                    iteration,
                    best_cost: Stat::of(&col(|r| r.best_cost)),
                    mean_cost: Stat::of(&col(|r| r.mean_cost)),
                    ir: Stat::of(&col(|r| r.ir)),
                }
            })
            .collect();
        let probe_ir = iterations.iter().find(|s| s.iteration == probe_iteration).map(|s| s.ir);
        Self {
            seeds,
            iterations,
            probe_iteration,
            probe_ir,
        }
    }

    pub fn last(&self) -> Option<&IterationSummary> {
        self.iterations.last()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seeds: {}", self.seeds);
        let _ = writeln!(s, "iteration  best_mean  best_std  mean_mean  mean_std  ir_mean  ir_std");
        for it in &self.iterations {
            let _ = writeln!(
                s,
                "{:>9}  {:>9.5}  {:>8.5}  {:>9.5}  {:>8.5}  {:>7.4}  {:>6.4}",
                it.iteration, it.best_cost.mean, it.best_cost.std, it.mean_cost.mean, it.mean_cost.std, it.ir.mean, it.ir.std
            );
        }
        match self.probe_ir {
            Some(ir) => {
                let _ = writeln!(s, "ir at iteration {}: {:.6} ± {:.6}", self.probe_iteration, ir.mean, ir.std);
            }
            None => {
                let _ = writeln!(s, "ir at iteration {}: not reached", self.probe_iteration);
            }
        }
        s
    }
}
