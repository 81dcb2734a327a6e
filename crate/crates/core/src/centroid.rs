//! Performance weights, the weighted Bregman centroid and relevance scores of
//! a worker ensemble.
//!
//! For an exponential family the right-sided weighted centroid
//! `argmin_θ Σ wᵢ D_Ψ(θᵢ‖θ)` is the weighted average of the workers' mean
//! parameters, `η_c = Σ wᵢ ηᵢ`, with `θ_c = ∇Ψ*(η_c)`. The minimised value is
//! the information radius, and each worker's share `γᵢ = wᵢ D_Ψ(θᵢ‖θ_c)` is
//! its relevance score.

use crate::error::{Error, Result};
use crate::expfam::{dot, DiagGaussian, FixedVarianceGaussian, Potential};

/// Weights below this value are clamped to it before renormalising.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// One CEM worker as seen by the ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState {
    pub id: usize,
    pub dist: DiagGaussian,
    /// Costs of the latest sampled population (non-finite entries kept).
    population_costs: Vec<f64>,
    mean_cost: Option<f64>,
    pub weight: f64,
}

impl WorkerState {
    pub fn new(id: usize, dist: DiagGaussian) -> Self {
        Self {
            id,
            dist,
            population_costs: Vec::new(),
            mean_cost: None,
            weight: 0.0,
        }
    }

    pub fn population_costs(&self) -> &[f64] {
        &self.population_costs
    }

    pub fn record_costs(&mut self, costs: Vec<f64>) {
        let (sum, n) = costs
            .iter()
            .filter(|c| c.is_finite())
            .fold((0.0, 0usize), |(s, n), c| (s + c, n + 1));
        self.mean_cost = (n > 0).then(|| sum / n as f64);
        self.population_costs = costs;
    }

    /// Arithmetic mean of the finite population costs, the estimate of
    /// `E_{p_θ}[J]`. `None` before the first sampling round.
    pub fn mean_cost(&self) -> Option<f64> {
        self.mean_cost
    }
}

/// Softmax temperature for the performance weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Temperature {
    Fixed(f64),
    /// Multiple of the interquartile range of the mean costs.
    Adaptive(f64),
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature::Adaptive(1.0)
    }
}

impl Temperature {
    /// Concrete temperature for this set of mean costs. An adaptive
    /// temperature falls back to the cost range, then to the scale itself,
    /// when the spread is zero.
    pub fn resolve(&self, mean_costs: &[f64]) -> f64 {
        self.resolve_with(mean_costs, &mut Vec::new())
    }

    /// [`Self::resolve`] using `scratch` for the sorted copy.
    pub fn resolve_with(&self, mean_costs: &[f64], scratch: &mut Vec<f64>) -> f64 {
        match *self {
            Temperature::Fixed(t) => t,
            Temperature::Adaptive(scale) => {
                scratch.clear();
                scratch.extend(mean_costs.iter().copied().filter(|c| c.is_finite()));
                scratch.sort_unstable_by(f64::total_cmp);
                let spread = interquartile_range(scratch);
                let range = match (scratch.first(), scratch.last()) {
                    (Some(a), Some(b)) => b - a,
                    _ => 0.0,
                };
                if spread > 0.0 {
                    scale * spread
                } else if range > 0.0 {
                    scale * range
                } else {
                    scale
                }
            }
        }
    }
}

/// Interquartile range of sorted data with linear interpolation between
/// order statistics.
pub fn interquartile_range(sorted: &[f64]) -> f64 {
    quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let pos = q * (n - 1) as f64;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if i + 1 < n {
                sorted[i] + frac * (sorted[i + 1] - sorted[i])
            } else {
                sorted[n - 1]
            }
        }
    }
}

/// `wᵢ ∝ exp(−c̄ᵢ / T)`, max-shifted, floored at [`WEIGHT_FLOOR`] and
/// renormalised.
pub fn performance_weights(mean_costs: &[f64], temperature: f64) -> Result<Vec<f64>> {
    let mut w = Vec::with_capacity(mean_costs.len());
    performance_weights_into(mean_costs, temperature, &mut w)?;
    Ok(w)
}

/// [`performance_weights`] writing into `out`.
pub fn performance_weights_into(mean_costs: &[f64], temperature: f64, out: &mut Vec<f64>) -> Result<()> {
    if mean_costs.is_empty() {
        return Err(Error::Empty("mean costs"));
    }
    if mean_costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("mean costs"));
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    let best = mean_costs.iter().copied().fold(f64::INFINITY, f64::min);
    out.clear();
    out.extend(mean_costs.iter().map(|c| (-(c - best) / temperature).exp()));
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x = (*x / total).max(WEIGHT_FLOOR));
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    Ok(())
}

/// Performance-weighted Bregman centroid of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroid {
    /// `η_c = Σ wᵢ ηᵢ`
    pub eta: Vec<f64>,
    /// `θ_c = ∇Ψ*(η_c)`
    pub theta: Vec<f64>,
    pub information_radius: f64,
}

fn validate<P: Potential + ?Sized, E: AsRef<[f64]>>(potential: &P, etas: &[E], weights: &[f64]) -> Result<Vec<f64>> {
    if etas.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    Error::check_dim(etas.len(), weights.len())?;
    for eta in etas {
        let eta = eta.as_ref();
        Error::check_dim(potential.dim(), eta.len())?;
        if !potential.in_mean_domain(eta) {
            return Err(Error::Domain(format!("worker mean parameter {eta:?}")));
        }
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidConfig(format!("weights must be finite and >= 0: {weights:?}")));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWeights);
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Closed-form centroid in mean coordinates. Weights are normalised to sum
/// to one.
///
/// `η_c = Σ wᵢ ηᵢ` minimises `Σ wᵢ D_Ψ*(ηᵢ‖η) = Σ wᵢ D_Ψ(θ‖θᵢ)`. For a
/// quadratic cumulant, such as the fixed-variance geometry the ensemble
/// uses, it is also the minimiser of `Σ wᵢ D_Ψ(θᵢ‖θ)`; in general that
/// minimiser is `Σ wᵢ θᵢ` instead.
pub fn weighted_centroid<P: Potential + ?Sized, E: AsRef<[f64]>>(
    potential: &P,
    etas: &[E],
    weights: &[f64],
) -> Result<Centroid> {
    let w = validate(potential, etas, weights)?;
    let mut eta_c = vec![0.0; potential.dim()];
    for (eta, wi) in etas.iter().zip(&w) {
        for (c, e) in eta_c.iter_mut().zip(eta.as_ref()) {
            *c += wi * e;
        }
    }
    if !potential.in_mean_domain(&eta_c) {
        return Err(Error::Domain(format!("centroid {eta_c:?}")));
    }
    let theta_c = potential.conjugate_gradient(&eta_c);
    // D_Ψ(θᵢ‖θ_c) = D_Ψ*(η_c‖ηᵢ), which avoids mapping every worker back.
    let information_radius = etas
        .iter()
        .zip(&w)
        .map(|(eta, wi)| wi * potential.mean_divergence(&eta_c, eta.as_ref()))
        .sum();
    Ok(Centroid {
        eta: eta_c,
        theta: theta_c,
        information_radius,
    })
}

/// `γᵢ = wᵢ D_Ψ(θᵢ‖θ_c)`.
pub fn relevance_scores<P: Potential + ?Sized, E: AsRef<[f64]>>(
    potential: &P,
    etas: &[E],
    weights: &[f64],
    centroid: &Centroid,
) -> Result<Vec<f64>> {
    let w = validate(potential, etas, weights)?;
    Error::check_dim(potential.dim(), centroid.eta.len())?;
    Ok(etas
        .iter()
        .zip(&w)
        .map(|(eta, wi)| {
            if *wi == 0.0 {
                0.0
            } else {
                wi * potential.mean_divergence(&centroid.eta, eta.as_ref())
            }
        })
        .collect())
}

/// `Σᵢ wᵢ D_Ψ(θᵢ‖θ_c)`, recomputed from the workers.
pub fn information_radius<P: Potential + ?Sized, E: AsRef<[f64]>>(
    potential: &P,
    etas: &[E],
    weights: &[f64],
    centroid: &Centroid,
) -> Result<f64> {
    Ok(relevance_scores(potential, etas, weights, centroid)?.iter().sum())
}

/// `−wᵢ ℓ(θᵢ; η_c) = wᵢ [Ψ(θᵢ) − ⟨θᵢ, η_c⟩]`.
///
/// Differs from the relevance score of worker `i` by `wᵢ·(⟨η_c, θ_c⟩ − Ψ(θ_c))`,
/// so the two orderings coincide when all weights are equal.
pub fn likelihood_rank_scores<P: Potential + ?Sized, E: AsRef<[f64]>>(
    potential: &P,
    etas: &[E],
    weights: &[f64],
    centroid: &Centroid,
) -> Result<Vec<f64>> {
    let w = validate(potential, etas, weights)?;
    Error::check_dim(potential.dim(), centroid.eta.len())?;
    Ok(etas
        .iter()
        .zip(&w)
        .map(|(eta, wi)| {
            let theta = potential.conjugate_gradient(eta.as_ref());
            wi * (potential.cumulant(&theta) - dot(&theta, &centroid.eta))
        })
        .collect())
}

/// Indices of the `k` smallest scores; ties go to the lowest id.
pub fn lowest_scores(scores: &[f64], ids: &[usize], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(ids[a].cmp(&ids[b])));
    order.truncate(k);
    order
}

/// Centroid of a worker ensemble under fixed-variance geometry, where each
/// worker's mean parameter is its mean vector.
pub fn workers_centroid(geometry: &FixedVarianceGaussian, workers: &[WorkerState]) -> Result<Centroid> {
    let etas: Vec<&[f64]> = workers.iter().map(|w| w.dist.mean()).collect();
    let weights: Vec<f64> = workers.iter().map(|w| w.weight).collect();
    weighted_centroid(geometry, &etas, &weights)
}

pub fn workers_relevance(
    geometry: &FixedVarianceGaussian,
    workers: &[WorkerState],
    centroid: &Centroid,
) -> Result<Vec<f64>> {
    let etas: Vec<&[f64]> = workers.iter().map(|w| w.dist.mean()).collect();
    let weights: Vec<f64> = workers.iter().map(|w| w.weight).collect();
    relevance_scores(geometry, &etas, &weights, centroid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::SquaredNorm;

    #[test]
    fn equal_costs_give_uniform_weights() {
        for t in [0.01, 1.0, 100.0] {
            let w = performance_weights(&[5.0, 5.0, 5.0], t).unwrap();
            for x in w {
                assert!((x - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_by_hand() {
        let w = performance_weights(&[0.0, std::f64::consts::LN_2], 1.0).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hot_softmax_is_nearly_uniform() {
        let costs = [0.0, 0.3, 0.55, 0.9, 1.0];
        let w = performance_weights(&costs, 1e6).unwrap();
        for x in w {
            assert!((x - 0.2).abs() < 1e-3);
        }
    }

    #[test]
    fn weights_errors_and_floor() {
        assert_eq!(performance_weights(&[], 1.0), Err(Error::Empty("mean costs")));
        assert!(performance_weights(&[1.0, f64::NAN], 1.0).is_err());
        assert!(performance_weights(&[1.0, f64::INFINITY], 1.0).is_err());
        assert!(performance_weights(&[1.0], 0.0).is_err());
        let w = performance_weights(&[0.0, 1e6], 1.0).unwrap();
        assert!(w[1] > 0.0 && w[1] < 2e-12);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adaptive_temperature_uses_iqr() {
        // quartiles of 1..=5 are 2 and 4
        assert_eq!(Temperature::Adaptive(1.0).resolve(&[3.0, 1.0, 5.0, 2.0, 4.0]), 2.0);
        assert_eq!(Temperature::Adaptive(0.5).resolve(&[1.0, 1.0, 1.0, 1.0, 9.0]), 4.0);
        assert_eq!(Temperature::Adaptive(1.0).resolve(&[2.0, 2.0]), 1.0);
        assert_eq!(Temperature::Fixed(3.0).resolve(&[0.0]), 3.0);
    }

    #[test]
    fn two_worker_centroid_is_midpoint() {
        let p = FixedVarianceGaussian::isotropic(2, 1.0).unwrap();
        let c = weighted_centroid(&p, &[[0.0, 0.0], [2.0, 0.0]], &[0.5, 0.5]).unwrap();
        assert_eq!(c.eta, vec![1.0, 0.0]);
        // each worker sits ½·1² away
        assert!((c.information_radius - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weighted_mean_by_hand() {
        let p = FixedVarianceGaussian::isotropic(1, 1.0).unwrap();
        let c = weighted_centroid(&p, &[[0.0], [1.0], [2.0]], &[0.5, 0.3, 0.2]).unwrap();
        assert!((c.eta[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn identical_workers_have_zero_radius() {
        let p = FixedVarianceGaussian::isotropic(2, 0.3).unwrap();
        let etas = [[1.5, -2.0]; 4];
        let w = [0.1, 0.2, 0.3, 0.4];
        let c = weighted_centroid(&p, &etas, &w).unwrap();
        assert_eq!(c.information_radius, 0.0);
        assert!(relevance_scores(&p, &etas, &w, &c).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn squared_norm_radius_is_sample_variance() {
        // F = ‖x‖² on θ, points {−1, 1}
        let p = SquaredNorm::new(1);
        let etas: Vec<Vec<f64>> = [[-1.0], [1.0]]
            .iter()
            .map(|t| p.cumulant_gradient(t))
            .collect();
        let c = weighted_centroid(&p, &etas, &[0.5, 0.5]).unwrap();
        assert_eq!(c.theta, vec![0.0]);
        assert!((c.information_radius - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_worker_scores_zero() {
        let p = FixedVarianceGaussian::isotropic(1, 1.0).unwrap();
        let etas = [[0.0], [5.0], [1.0]];
        let w = [0.5, 0.0, 0.5];
        let c = weighted_centroid(&p, &etas, &w).unwrap();
        let g = relevance_scores(&p, &etas, &w, &c).unwrap();
        assert_eq!(g[1], 0.0);
        assert!((g.iter().sum::<f64>() - c.information_radius).abs() < 1e-12);
    }

    #[test]
    fn centroid_errors() {
        let p = FixedVarianceGaussian::isotropic(2, 1.0).unwrap();
        let empty: [[f64; 2]; 0] = [];
        assert!(weighted_centroid(&p, &empty, &[]).is_err());
        assert_eq!(
            weighted_centroid(&p, &[[0.0, 0.0], [1.0, 1.0]], &[0.0, 0.0]),
            Err(Error::ZeroWeights)
        );
        assert!(matches!(
            weighted_centroid(&p, &[vec![0.0, 0.0], vec![1.0]], &[0.5, 0.5]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(weighted_centroid(&p, &[[0.0, 0.0]], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn single_worker_ranks_first() {
        let p = FixedVarianceGaussian::isotropic(2, 1.0).unwrap();
        let etas = [[0.3, 0.1]];
        let c = weighted_centroid(&p, &etas, &[1.0]).unwrap();
        let s = likelihood_rank_scores(&p, &etas, &[1.0], &c).unwrap();
        assert_eq!(lowest_scores(&s, &[0], 1), vec![0]);
    }

    #[test]
    fn worker_at_centroid_minimises_likelihood_score() {
        let p = FixedVarianceGaussian::isotropic(2, 1.0).unwrap();
        // symmetric layout: the middle worker coincides with the centroid
        let etas = [[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]];
        let w = [1.0 / 3.0; 3];
        let c = weighted_centroid(&p, &etas, &w).unwrap();
        let s = likelihood_rank_scores(&p, &etas, &w, &c).unwrap();
        assert_eq!(lowest_scores(&s, &[0, 1, 2], 1), vec![1]);
        let g = relevance_scores(&p, &etas, &w, &c).unwrap();
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn tie_break_prefers_lowest_id() {
        assert_eq!(lowest_scores(&[1.0, 0.5, 0.5, 2.0], &[4, 3, 1, 0], 1), vec![2]);
        assert_eq!(lowest_scores(&[0.0, 0.0], &[0, 1], 2), vec![0, 1]);
    }

    #[test]
    fn worker_mean_cost_skips_non_finite() {
        let mut w = WorkerState::new(0, DiagGaussian::isotropic(vec![0.0], 1.0).unwrap());
        assert_eq!(w.mean_cost(), None);
        w.record_costs(vec![1.0, f64::INFINITY, 3.0]);
        assert_eq!(w.mean_cost(), Some(2.0));
    }
}
