//! Acceptance criteria 1–9, run in sequence so that timings are not
//! disturbed by other tests. Each criterion prints one PASS/FAIL line.

use std::path::Path;
use std::time::{Duration, Instant};

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use argmin_math::ArgminSub;
use bcevo::centroid::{likelihood_rank_scores, relevance_scores, weighted_centroid};
use bcevo::expfam::{DiagGaussianPotential, FixedVarianceGaussian, Potential, SquaredNorm};
use bcevo::rng::RngStream;
use bcevo_bench::runner::{run_benchmark_with, run_navigation, BenchmarkResult, Comparison};
use bcevo_bench::sampler_check::{
    exact_feasibility, non_quadratic_fixture, proxy_fidelity, quadratic_fixture, radial_ks,
};
use bcevo_bench::spec::{BenchmarkSpec, Optimizer};
use rand::Rng;

struct Verdict {
    criterion: usize,
    passed: bool,
}

fn report(criterion: usize, name: &str, passed: bool, detail: String) -> Verdict {
    println!("{} criterion {criterion} ({name}): {detail}", if passed { "PASS" } else { "FAIL" });
    Verdict { criterion, passed }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// `θ ↦ Σ wᵢ D_Ψ(θᵢ‖θ)` with normalised weights.
struct NaturalObjective {
    geometry: FixedVarianceGaussian,
    thetas: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl CostFunction for NaturalObjective {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, theta: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        Ok(self
            .thetas
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * self.geometry.natural_divergence(t, theta))
            .sum())
    }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = RngStream::new(101);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(3..=8);
        let var: Vec<f64> = (0..2).map(|_| rng.random_range(0.05..5.0)).collect();
        let geometry = FixedVarianceGaussian::new(var).unwrap();
        let etas: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();

        let closed = weighted_centroid(&geometry, &etas, &weights).unwrap();

        let thetas = etas.iter().map(|e| geometry.conjugate_gradient(e)).collect();
        let simplex = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let solver = NelderMead::new(simplex).with_sd_tolerance(1e-15).unwrap();
        let problem = NaturalObjective {
            geometry: geometry.clone(),
            thetas,
            weights,
        };
        let result = Executor::new(problem, solver).configure(|s| s.max_iters(10_000)).run().unwrap();
        let theta = result.state().get_best_param().unwrap().clone();
        let eta = geometry.cumulant_gradient(&theta);
        worst = eta.sub(&closed.eta).iter().fold(worst, |m, g| m.max(g.abs()));
    }
    let elapsed = start.elapsed();
    report(
        1,
        "centroid oracle",
        worst < 1e-4 && elapsed < Duration::from_secs(10),
        format!("max mean-coordinate gap {worst:.2e} (tol 1e-4) over 20 ensembles in {:.2}s (limit 10s)", secs(elapsed)),
    )
}

fn criterion_2() -> Verdict {
    let mut rng = RngStream::new(202);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=20);
        let d = rng.random_range(1..=5);
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let potential = SquaredNorm::new(d);
        let etas: Vec<Vec<f64>> = points.iter().map(|x| potential.cumulant_gradient(x)).collect();
        let c = weighted_centroid(&potential, &etas, &vec![1.0; n]).unwrap();
        let mean: Vec<f64> = (0..d).map(|k| points.iter().map(|x| x[k]).sum::<f64>() / n as f64).collect();
        let variance: f64 = points
            .iter()
            .map(|x| x.iter().zip(&mean).map(|(a, m)| (a - m).powi(2)).sum::<f64>())
            .sum::<f64>()
            / n as f64;
        worst = worst.max((c.information_radius - variance).abs());
    }
    report(
        2,
        "IR equals variance",
        worst < 1e-9,
        format!("max |IR - variance| {worst:.2e} (tol 1e-9) over 1000 point sets"),
    )
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let draws = 100_000;
    let (quad, qc) = quadratic_fixture();
    let (nonq, nc) = non_quadratic_fixture();
    let fq = exact_feasibility(&quad, &qc, 0.5, draws, 0).unwrap();
    let fn_ = exact_feasibility(&nonq, &nc, 0.1, draws, 1).unwrap();
    let ks = radial_ks(&quad, &qc, 0.5, draws, 2).unwrap();
    let elapsed = start.elapsed();
    report(
        3,
        "exact sampler",
        fq.violations == 0 && fn_.violations == 0 && ks.passed() && elapsed < Duration::from_secs(30),
        format!(
            "{} + {} of {draws} draws outside the ball; radial KS D = {:.5} vs {:.5}; {:.2}s (limit 30s)",
            fq.violations,
            fn_.violations,
            ks.statistic,
            ks.critical,
            secs(elapsed)
        ),
    )
}

fn criterion_4() -> Verdict {
    let (quad, qc) = quadratic_fixture();
    let (nonq, nc) = non_quadratic_fixture();
    let pq = proxy_fidelity(&quad, &qc, 0.5, 1000, 3).unwrap();
    let deviations: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4]
        .iter()
        .enumerate()
        .map(|(k, &delta)| proxy_fidelity(&nonq, &nc, delta, 1000, 4 + k as u64).unwrap().max_ratio_deviation())
        .collect();
    let shrinking = deviations.windows(2).all(|w| w[1] < w[0]);
    let last = *deviations.last().unwrap();
    report(
        4,
        "proxy fidelity",
        pq.max_abs_error < 1e-9 && shrinking && last <= 0.05,
        format!(
            "quadratic max error {:.2e} (tol 1e-9); non-quadratic max |ratio - 1| at delta 1e-1..1e-4: {:?} (tol 0.05 at 1e-4)",
            pq.max_abs_error,
            deviations.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    idx
}

fn criterion_5() -> Verdict {
    let mut rng = RngStream::new(505);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(3..=10);
        let gaussians: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .map(|_| {
                let mu: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
                let var: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..3.0)).collect();
                (mu, var)
            })
            .collect();
        let w = vec![1.0; n];

        let full = DiagGaussianPotential::new(4);
        let etas: Vec<Vec<f64>> = gaussians
            .iter()
            .map(|(mu, var)| mu.iter().cloned().chain(mu.iter().zip(var).map(|(m, v)| m * m + v)).collect())
            .collect();
        let c = weighted_centroid(&full, &etas, &w).unwrap();
        if order(&relevance_scores(&full, &etas, &w, &c).unwrap()) != order(&likelihood_rank_scores(&full, &etas, &w, &c).unwrap()) {
            mismatches += 1;
        }

        let fixed = FixedVarianceGaussian::new(gaussians[0].1.clone()).unwrap();
        let means: Vec<Vec<f64>> = gaussians.iter().map(|(mu, _)| mu.clone()).collect();
        let c = weighted_centroid(&fixed, &means, &w).unwrap();
        if order(&relevance_scores(&fixed, &means, &w, &c).unwrap()) != order(&likelihood_rank_scores(&fixed, &means, &w, &c).unwrap()) {
            mismatches += 1;
        }
    }
    report(
        5,
        "ranking equivalence",
        mismatches == 0,
        format!("{mismatches} ordering mismatches over 100 ensembles in each of two geometries"),
    )
}

fn synthetic_spec(dir: &Path, optimizer: Optimizer, tag: &str) -> BenchmarkSpec {
    let mut spec = BenchmarkSpec::synthetic();
    spec.optimizer = optimizer;
    spec.output.csv = Some(dir.join(format!("synthetic-{optimizer}-{tag}.csv")));
    spec
}

fn run_synthetic(dir: &Path, tag: &str) -> (Vec<BenchmarkResult>, Duration) {
    let start = Instant::now();
    let results = [Optimizer::BcEvocem, Optimizer::Decent, Optimizer::Vanilla]
        .into_iter()
        .map(|o| run_benchmark_with(&synthetic_spec(dir, o, tag), o).unwrap())
        .collect();
    (results, start.elapsed())
}

fn criterion_6(results: &[BenchmarkResult], elapsed: Duration) -> Verdict {
    let (bc, decent, vanilla) = (&results[0], &results[1], &results[2]);
    let budgets_equal = results.iter().all(|r| r.budget == bc.budget && r.budget_violations().is_empty());
    let bc_best = bc.summary.last().unwrap().best_cost.mean;
    let decent_best = decent.summary.last().unwrap().best_cost.mean;
    let bc_ir = bc.summary.probe_ir.unwrap().mean;
    let vanilla_ir = vanilla.summary.probe_ir.unwrap().mean;
    let ratio = bc_ir / vanilla_ir;
    report(
        6,
        "synthetic benchmark",
        budgets_equal && bc_best <= decent_best && ratio >= 10.0 && elapsed < Duration::from_secs(120),
        format!(
            "mean best at T=25: guided {bc_best:.6} vs decentralized {decent_best:.6}; IR at 25: guided {bc_ir:.4} vs vanilla {vanilla_ir:.4} (ratio {ratio:.1}, need >= 10); budget {} per seed, equal {budgets_equal}; {:.1}s (limit 120s)",
            bc.budget,
            secs(elapsed)
        ),
    )
}

fn nav_spec(dir: &Path, optimizer: Optimizer, tag: &str) -> BenchmarkSpec {
    let mut spec = BenchmarkSpec::navigation();
    spec.optimizer = optimizer;
    spec.output.csv = Some(dir.join(format!("navigation-{optimizer}-{tag}.csv")));
    spec
}

fn run_nav(dir: &Path, tag: &str) -> (Comparison, Duration) {
    let start = Instant::now();
    let guided = run_navigation(&nav_spec(dir, Optimizer::BcEvocem, tag), Optimizer::BcEvocem).unwrap();
    let decent = run_navigation(&nav_spec(dir, Optimizer::Decent, tag), Optimizer::Decent).unwrap();
    let pairs = guided
        .episodes
        .iter()
        .zip(&decent.episodes)
        .map(|((s, a), (_, b))| (*s, a.average_cost(), b.average_cost()))
        .collect();
    let comparison = Comparison {
        a: Optimizer::BcEvocem,
        b: Optimizer::Decent,
        pairs,
    };
    (comparison, start.elapsed())
}

fn criterion_7(c: &Comparison, elapsed: Duration) -> Verdict {
    let n = c.pairs.len();
    let wins = c.wins();
    let ratio = c.mean_ratio();
    report(
        7,
        "navigation",
        wins * 10 >= n * 7 && ratio <= 0.6 && elapsed < Duration::from_secs(600),
        format!(
            "guided cheaper on {wins}/{n} seeds (need >= 70%); mean normalized average cost {ratio:.3} (need <= 0.6); means {:.3} vs {:.3}; {:.1}s (limit 600s)",
            c.mean_a(),
            c.mean_b(),
            secs(elapsed)
        ),
    )
}

fn criterion_8(bc: &BenchmarkResult) -> Verdict {
    let overhead = bc.coupling_overhead();
    report(
        8,
        "coupling overhead",
        overhead < 0.05,
        format!("centroid, scoring and replacement take {:.2}% of cost-evaluation time (limit 5%)", 100.0 * overhead),
    )
}

fn criterion_9(dir: &Path) -> Verdict {
    run_synthetic(dir, "rerun");
    run_nav(dir, "rerun");
    let mut differing = Vec::new();
    let mut compared = 0;
    for o in [Optimizer::BcEvocem, Optimizer::Decent, Optimizer::Vanilla] {
        let mut names = vec![format!("synthetic-{o}")];
        if o != Optimizer::Vanilla {
            names.push(format!("navigation-{o}"));
        }
        for name in names {
            let a = std::fs::read(dir.join(format!("{name}-first.csv"))).unwrap();
            let b = std::fs::read(dir.join(format!("{name}-rerun.csv"))).unwrap();
            compared += 1;
            if a != b {
                differing.push(name);
            }
        }
    }
    report(
        9,
        "determinism",
        differing.is_empty(),
        format!("{compared} CSV files compared byte for byte; differing: {differing:?}"),
    )
}

#[test]
fn acceptance_criteria() {
    println!();
    let dir = tempfile::tempdir().unwrap();
    let mut verdicts = vec![criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5()];
    let (synthetic, synthetic_time) = run_synthetic(dir.path(), "first");
    verdicts.push(criterion_6(&synthetic, synthetic_time));
    let (navigation, navigation_time) = run_nav(dir.path(), "first");
    verdicts.push(criterion_7(&navigation, navigation_time));
    verdicts.push(criterion_8(&synthetic[0]));
    verdicts.push(criterion_9(dir.path()));

    let failed: Vec<usize> = verdicts.iter().filter(|v| !v.passed).map(|v| v.criterion).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
