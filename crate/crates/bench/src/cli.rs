//! Command-line driver.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{BenchError, Result};
use crate::runner::{compare, run_benchmark, run_navigation};
use crate::sampler_check;
use crate::spec::{BenchmarkSpec, Objective, Optimizer};
use crate::svg::emit_trajectory_svg;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "bcevo", version, about = "Centroid-guided ensemble CEM benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Multimodal 2-D benchmark; writes per-iteration metrics.
    Synthetic(RunArgs),
    /// Closed-loop navigation; writes per-step metrics and an SVG of the first seed.
    Navigate(RunArgs),
    /// Paired-seed comparison of two optimizers.
    Compare(CompareArgs),
    /// Statistical tests of the trust-region samplers.
    SamplerCheck(CheckArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML benchmark file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run a single seed.
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Run seeds 0..N.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Number of ensemble workers.
    #[arg(long)]
    pub workers: Option<usize>,
    /// CEM iterations (inner iterations per control step for navigation).
    #[arg(long)]
    pub iters: Option<usize>,
    /// Trust-region radius.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// vanilla, decent or bc-evocem.
    #[arg(long)]
    pub optimizer: Option<Optimizer>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "bc-evocem")]
    pub a: Optimizer,
    #[arg(long, default_value = "decent")]
    pub b: Optimizer,
    /// Compare on navigation instead of the synthetic objective.
    #[arg(long)]
    pub navigation: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 100_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Loads the benchmark file (or the default for `base`) and applies flag overrides.
pub fn resolve_spec(common: &CommonArgs, base: fn() -> BenchmarkSpec) -> Result<BenchmarkSpec> {
    let mut spec = match &common.config {
        Some(path) => BenchmarkSpec::load(path)?,
        None => base(),
    };
    if let Some(s) = common.seed {
        spec.seeds = vec![s];
    }
    if let Some(n) = common.seeds {
        spec.seeds = (0..n).collect();
    }
    if let Some(n) = common.workers {
        spec.workers = n;
    }
    if let Some(t) = common.iters {
        spec.cem.iterations = t;
        if spec.probe_iteration > t {
            spec.probe_iteration = t;
        }
    }
    if let Some(d) = common.delta {
        spec.cem.trust_radius = d;
    }
    spec.validate()?;
    Ok(spec)
}

fn output_path(out: &Option<PathBuf>, file: String) -> Option<PathBuf> {
    out.as_ref().map(|d| d.join(file))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| BenchError::io(path, e))
}

fn synthetic(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let mut spec = resolve_spec(&args.common, BenchmarkSpec::synthetic)?;
    if let Some(o) = args.optimizer {
        spec.optimizer = o;
    }
    if spec.objective == Objective::Navigation {
        return Err(BenchError::Spec(vec!["objective: use the navigate subcommand".into()]));
    }
    let stem = format!("{}-{}", spec.name, spec.optimizer);
    spec.output.csv = output_path(&args.common.out, format!("{stem}.csv")).or(spec.output.csv);
    spec.output.summary = output_path(&args.common.out, format!("{stem}-summary.txt")).or(spec.output.summary);
    let result = run_benchmark(&spec)?;
    let _ = write!(out, "{} on {}, {} seeds\n{}", spec.optimizer, spec.name, spec.seeds.len(), result.summary.to_text());
    let _ = writeln!(
        out,
        "evaluations per seed: budget {}, mismatched seeds {:?}; coupling/cost time {:.2}%",
        result.budget,
        result.budget_violations(),
        100.0 * result.coupling_overhead()
    );
    Ok(())
}

fn navigate(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let mut spec = resolve_spec(&args.common, BenchmarkSpec::navigation)?;
    spec.objective = Objective::Navigation;
    spec.validate()?;
    let optimizer = args.optimizer.unwrap_or(spec.optimizer);
    let stem = format!("{}-{}", spec.name, optimizer);
    spec.output.csv = output_path(&args.common.out, format!("{stem}.csv")).or(spec.output.csv);
    spec.output.svg = output_path(&args.common.out, format!("{stem}.svg")).or(spec.output.svg);
    let result = run_navigation(&spec, optimizer)?;
    for (seed, e) in &result.episodes {
        let last = e.states.last().expect("start state");
        let _ = writeln!(
            out,
            "seed {seed}: average cost {:.3}, best cost {:.3}, final state ({:.3}, {:.3}){}",
            e.average_cost(),
            e.best_cost(),
            last[0],
            last[1],
            if e.failed { ", FAILED" } else { "" }
        );
    }
    if let (Some(path), Some((_, first))) = (&spec.output.svg, result.episodes.first()) {
        write_text(path, &emit_trajectory_svg(first, &spec.environment()?)?)?;
    }
    Ok(())
}

fn compare_cmd(args: &CompareArgs, out: &mut dyn Write) -> Result<()> {
    let base = if args.navigation {
        BenchmarkSpec::navigation
    } else {
        BenchmarkSpec::synthetic
    };
    let mut spec = resolve_spec(&args.common, base)?;
    if args.navigation {
        spec.objective = Objective::Navigation;
    }
    for opt in [args.a, args.b] {
        let mut probe = spec.clone();
        probe.optimizer = opt;
        probe.validate()?;
    }
    let c = compare(&spec, args.a, args.b)?;
    for (seed, a, b) in &c.pairs {
        let _ = writeln!(out, "seed {seed}: {} {a:.6}  {} {b:.6}", c.a, c.b);
    }
    let _ = writeln!(
        out,
        "{} better on {}/{} seeds; means {:.6} vs {:.6}; mean ratio {:.4}",
        c.a,
        c.wins(),
        c.pairs.len(),
        c.mean_a(),
        c.mean_b(),
        c.mean_ratio()
    );
    Ok(())
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Synthetic(a) => synthetic(a, out),
        Command::Navigate(a) => navigate(a, out),
        Command::Compare(a) => compare_cmd(a, out),
        Command::SamplerCheck(a) => match sampler_check::run_all(a.draws, a.seed) {
            Ok(lines) => {
                for l in &lines {
                    let _ = writeln!(out, "{l}");
                }
                if lines.iter().all(|l| l.passed) {
                    return EXIT_OK;
                }
                return EXIT_CHECK_FAILED;
            }
            Err(e) => Err(e),
        },
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e @ BenchError::Spec(_)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUNTIME
        }
    }
}
