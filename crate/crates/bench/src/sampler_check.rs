//! Statistical checks of the trust-region samplers.

use std::fmt;

use bcevo::expfam::{DiagGaussianPotential, FixedVarianceGaussian, Potential};
use bcevo::rng::RngStream;
use bcevo::trust_region::{proxy_rho_max, uniform_sphere_direction, TrustRegion};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::Result;

/// Asymptotic Kolmogorov–Smirnov critical value at `α = 0.01` is
/// `1.6276/√n`.
pub const KS_COEFFICIENT_01: f64 = 1.6276;

#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub draws: usize,
    pub violations: usize,
    /// Largest `D_Ψ*(η_c‖η)` over the draws.
    pub max_divergence: f64,
    pub radius: f64,
}

/// Draws `draws` exact samples and counts those outside the ball.
pub fn exact_feasibility<P: Potential + ?Sized>(
    potential: &P,
    center: &[f64],
    radius: f64,
    draws: usize,
    seed: u64,
) -> Result<Feasibility> {
    let region = TrustRegion::new(potential, center.to_vec(), radius)?;
    let mut rng = RngStream::new(seed);
    let mut out = Feasibility {
        draws,
        violations: 0,
        max_divergence: 0.0,
        radius,
    };
    for _ in 0..draws {
        let eta = region.exact_sample(&mut rng)?;
        let d = region.divergence_from_center(&eta).unwrap_or(f64::INFINITY);
        out.max_divergence = out.max_divergence.max(d);
        if !(d <= radius) {
            out.violations += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KsResult {
    pub n: usize,
    pub statistic: f64,
    pub critical: f64,
}

impl KsResult {
    pub fn passed(&self) -> bool {
        self.statistic < self.critical
    }
}

/// One-sample KS statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// Normalised radius `r = √(D/Δ)` of exact draws in a quadratic ball.
///
/// Volume-uniform points have `P(r ≤ s) = s^d`.
pub fn radial_ks(geometry: &FixedVarianceGaussian, center: &[f64], radius: f64, draws: usize, seed: u64) -> Result<KsResult> {
    let region = TrustRegion::new(geometry, center.to_vec(), radius)?;
    let mut rng = RngStream::new(seed);
    let d = geometry.dim() as i32;
    let mut r = Vec::with_capacity(draws);
    for _ in 0..draws {
        let eta = region.exact_sample(&mut rng)?;
        r.push((geometry.mean_divergence(center, &eta) / radius).sqrt());
    }
    Ok(KsResult {
        n: draws,
        statistic: ks_statistic(&mut r, |s| s.clamp(0.0, 1.0).powi(d)),
        critical: KS_COEFFICIENT_01 / (draws as f64).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquareResult {
    pub bins: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// Angle of `η − η_c` for exact draws in a planar ball, binned and tested
/// for uniformity. With `whiten` the offset is first scaled by `1/σ`, which
/// maps a quadratic ball to a disc; a volume-uniform sampler would pass
/// that variant too.
pub fn angular_chi_square(
    geometry: &FixedVarianceGaussian,
    center: &[f64],
    radius: f64,
    draws: usize,
    bins: usize,
    whiten: bool,
    seed: u64,
) -> Result<ChiSquareResult> {
    assert_eq!(geometry.dim(), 2, "angular test is planar");
    let region = TrustRegion::new(geometry, center.to_vec(), radius)?;
    let mut rng = RngStream::new(seed);
    let sd: Vec<f64> = if whiten {
        geometry.variance().iter().map(|v| v.sqrt()).collect()
    } else {
        vec![1.0; 2]
    };
    let mut counts = vec![0usize; bins];
    for _ in 0..draws {
        let eta = region.exact_sample(&mut rng)?;
        let (x, y) = ((eta[0] - center[0]) / sd[0], (eta[1] - center[1]) / sd[1]);
        let frac = (y.atan2(x) + std::f64::consts::PI) / std::f64::consts::TAU;
        counts[((frac * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = draws as f64 / bins as f64;
    let statistic = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((bins - 1) as f64).expect("positive degrees of freedom");
    Ok(ChiSquareResult {
        bins,
        statistic,
        p_value: 1.0 - dist.cdf(statistic),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyFidelity {
    pub radius: f64,
    pub directions: usize,
    /// `max |ρ̂_max − ρ_max|`
    pub max_abs_error: f64,
    /// Extremes of `ρ̂_max / ρ_max`.
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl ProxyFidelity {
    pub fn max_ratio_deviation(&self) -> f64 {
        (self.min_ratio - 1.0).abs().max((self.max_ratio - 1.0).abs())
    }
}

/// Compares the second-order boundary radius with the root-solved one along
/// random directions.
pub fn proxy_fidelity<P: Potential + ?Sized>(
    potential: &P,
    center: &[f64],
    radius: f64,
    directions: usize,
    seed: u64,
) -> Result<ProxyFidelity> {
    let region = TrustRegion::new(potential, center.to_vec(), radius)?;
    let hessian = potential.conjugate_hessian(center);
    let mut rng = RngStream::new(seed);
    let mut out = ProxyFidelity {
        radius,
        directions,
        max_abs_error: 0.0,
        min_ratio: f64::INFINITY,
        max_ratio: f64::NEG_INFINITY,
    };
    for _ in 0..directions {
        let v = uniform_sphere_direction(potential.dim(), &mut rng)?;
        let exact = region.rho_max(&v)?;
        let proxy = proxy_rho_max(&hessian, &v, radius);
        out.max_abs_error = out.max_abs_error.max((proxy - exact).abs());
        out.min_ratio = out.min_ratio.min(proxy / exact);
        out.max_ratio = out.max_ratio.max(proxy / exact);
    }
    Ok(out)
}

/// Anisotropic planar fixed-variance geometry used by the checks.
pub fn quadratic_fixture() -> (FixedVarianceGaussian, Vec<f64>) {
    (FixedVarianceGaussian::new(vec![0.5, 2.0]).expect("positive"), vec![1.0, -1.0])
}

/// Univariate Gaussian `N(0.3, 0.5)` in `(μ, μ² + σ²)` coordinates.
pub fn non_quadratic_fixture() -> (DiagGaussianPotential, Vec<f64>) {
    (DiagGaussianPotential::new(1), vec![0.3, 0.59])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn line(name: &str, passed: bool, detail: String) -> CheckLine {
    CheckLine {
        name: name.into(),
        passed,
        detail,
    }
}

/// The full battery with `draws` exact samples per test.
pub fn run_all(draws: usize, seed: u64) -> Result<Vec<CheckLine>> {
    let (quad, qc) = quadratic_fixture();
    let (nonq, nc) = non_quadratic_fixture();
    let mut lines = Vec::new();

    for (name, f) in [
        ("exact feasibility, quadratic", exact_feasibility(&quad, &qc, 0.5, draws, seed)?),
        ("exact feasibility, non-quadratic", exact_feasibility(&nonq, &nc, 0.1, draws, seed + 1)?),
    ] {
        lines.push(line(
            name,
            f.violations == 0,
            format!("{} of {} draws outside; max divergence {:.6e} vs radius {}", f.violations, f.draws, f.max_divergence, f.radius),
        ));
    }

    let ks = radial_ks(&quad, &qc, 0.5, draws, seed + 2)?;
    lines.push(line(
        "radial KS against r^d",
        ks.passed(),
        format!("D = {:.5}, critical {:.5} (alpha 0.01, n = {})", ks.statistic, ks.critical, ks.n),
    ));

    let chi = angular_chi_square(&quad, &qc, 0.5, draws, 36, false, seed + 3)?;
    lines.push(line(
        "direction chi-square",
        chi.p_value > 0.01,
        format!("chi2 = {:.3} on {} dof, p = {:.4}", chi.statistic, chi.bins - 1, chi.p_value),
    ));

    let pq = proxy_fidelity(&quad, &qc, 0.5, 1000, seed + 4)?;
    lines.push(line(
        "proxy radius, quadratic",
        pq.max_abs_error < 1e-9,
        format!("max |rho_hat - rho| = {:.3e} over {} directions", pq.max_abs_error, pq.directions),
    ));

    let mut prev = f64::INFINITY;
    let mut shrinking = true;
    let mut detail = Vec::new();
    for (k, delta) in [1e-1, 1e-2, 1e-3, 1e-4].into_iter().enumerate() {
        let p = proxy_fidelity(&nonq, &nc, delta, 1000, seed + 5 + k as u64)?;
        shrinking &= p.max_ratio_deviation() < prev;
        prev = p.max_ratio_deviation();
        detail.push(format!("delta {delta:e}: [{:.4}, {:.4}]", p.min_ratio, p.max_ratio));
    }
    lines.push(line(
        "proxy ratio, non-quadratic",
        shrinking && prev < 0.05,
        detail.join("; "),
    ));
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_statistic_of_perfect_grid() {
        let mut xs: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        let d = ks_statistic(&mut xs, |x| x);
        assert!((d - 0.05).abs() < 1e-15);
    }

    #[test]
    fn ks_detects_wrong_law() {
        let (quad, c) = quadratic_fixture();
        let region = TrustRegion::new(&quad, c.clone(), 0.5).unwrap();
        let mut rng = RngStream::new(9);
        // Radius drawn uniformly instead of as u^{1/d}: too many points near the centre.
        let mut r: Vec<f64> = (0..5000)
            .map(|i| {
                let v = uniform_sphere_direction(2, &mut rng).unwrap();
                let rho = region.rho_max(&v).unwrap() * (i as f64 + 0.5) / 5000.0;
                let eta: Vec<f64> = c.iter().zip(&v).map(|(a, b)| a + rho * b).collect();
                (quad.mean_divergence(&c, &eta) / 0.5).sqrt()
            })
            .collect();
        let d = ks_statistic(&mut r, |s| s * s);
        assert!(d > KS_COEFFICIENT_01 / (5000f64).sqrt());
    }

    #[test]
    fn exact_draws_are_not_volume_uniform_in_an_elongated_ball() {
        let (quad, c) = quadratic_fixture();
        let whitened = angular_chi_square(&quad, &c, 0.5, 20_000, 36, true, 3).unwrap();
        assert!(whitened.p_value < 1e-6, "{whitened:?}");
        let round = FixedVarianceGaussian::isotropic(2, 0.7).unwrap();
        let iso = angular_chi_square(&round, &c, 0.5, 20_000, 36, true, 3).unwrap();
        assert!(iso.p_value > 0.01, "{iso:?}");
    }

    #[test]
    fn small_battery_passes() {
        let lines = run_all(5000, 11).unwrap();
        assert_eq!(lines.len(), 6);
        for l in &lines {
            assert!(l.passed, "{l}");
        }
    }
}
