//! Exponential-family machinery for diagonal Gaussians.
//!
//! A regular exponential family `p_θ(x) ∝ exp(⟨θ, T(x)⟩ − Ψ(θ))` is described
//! by its cumulant `Ψ` (natural coordinates `θ`) and the convex conjugate `Ψ*`
//! (mean coordinates `η = ∇Ψ(θ)`). Both generate Bregman divergences and the
//! two coordinate systems are linked by the bijection `∇Ψ` with inverse `∇Ψ*`.
//!
//! Constant convention: additive constants (the `½ log 2π` terms of the
//! Gaussian cumulant) are dropped from `Ψ` and `Ψ*`. Divergences, centroids
//! and rankings do not depend on them, but absolute log-likelihood values do.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Lower bound applied to every variance entry.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// A strictly convex, differentiable function on a convex domain.
pub trait ConvexFunction {
    fn dim(&self) -> usize;
    fn in_domain(&self, x: &[f64]) -> bool;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// `D_F(x‖y) = F(x) − F(y) − ⟨x − y, ∇F(y)⟩`.
///
/// Negative round-off is clamped to zero.
pub fn bregman_divergence<F: ConvexFunction + ?Sized>(f: &F, x: &[f64], y: &[f64]) -> Result<f64> {
    Error::check_dim(f.dim(), x.len())?;
    Error::check_dim(f.dim(), y.len())?;
    if !f.in_domain(x) {
        return Err(Error::Domain(format!("first argument {x:?}")));
    }
    if !f.in_domain(y) {
        return Err(Error::Domain(format!("second argument {y:?}")));
    }
    let grad = f.gradient(y);
    let inner: f64 = x.iter().zip(y).zip(&grad).map(|((a, b), g)| (a - b) * g).sum();
    Ok((f.value(x) - f.value(y) - inner).max(0.0))
}

/// Hessian of a conjugate potential, kept diagonal when possible.
#[derive(Debug, Clone, PartialEq)]
pub enum Hessian {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl Hessian {
    pub fn dim(&self) -> usize {
        match self {
            Hessian::Diagonal(d) => d.len(),
            Hessian::Dense(m) => m.nrows(),
        }
    }

    /// `vᵀ H v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        match self {
            Hessian::Diagonal(d) => d.iter().zip(v).map(|(h, x)| h * x * x).sum(),
            Hessian::Dense(m) => {
                let n = m.nrows();
                let mut acc = 0.0;
                for i in 0..n {
                    let mut row = 0.0;
                    for j in 0..n {
                        row += m[(i, j)] * v[j];
                    }
                    acc += v[i] * row;
                }
                acc
            }
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            Hessian::Diagonal(d) => d.iter().sum(),
            Hessian::Dense(m) => m.trace(),
        }
    }

    pub fn check_positive_definite(&self) -> Result<()> {
        let ok = match self {
            Hessian::Diagonal(d) => d.iter().all(|h| h.is_finite() && *h > 0.0),
            Hessian::Dense(m) => {
                m.is_square()
                    && m.iter().all(|x| x.is_finite())
                    && (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0)
                    && m.clone().cholesky().is_some()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite)
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Hessian::Diagonal(d) => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)),
            Hessian::Dense(m) => m.clone(),
        }
    }
}

/// Cumulant `Ψ` of an exponential family together with its conjugate `Ψ*`.
pub trait Potential {
    /// Dimension of the natural (and mean) parameter vector.
    fn dim(&self) -> usize;
    fn in_natural_domain(&self, theta: &[f64]) -> bool;
    fn in_mean_domain(&self, eta: &[f64]) -> bool;
    /// `Ψ(θ)`
    fn cumulant(&self, theta: &[f64]) -> f64;
    /// `∇Ψ(θ)`, the natural-to-mean map.
    fn cumulant_gradient(&self, theta: &[f64]) -> Vec<f64>;
    /// `Ψ*(η)`
    fn conjugate(&self, eta: &[f64]) -> f64;
    /// `∇Ψ*(η)`, the mean-to-natural map.
    fn conjugate_gradient(&self, eta: &[f64]) -> Vec<f64>;
    /// `∇²Ψ*(η)`
    fn conjugate_hessian(&self, eta: &[f64]) -> Hessian;

    /// `D_Ψ(θ‖θ')` without domain checks. Closed forms may override.
    fn natural_divergence(&self, theta: &[f64], theta_ref: &[f64]) -> f64 {
        let grad = self.cumulant_gradient(theta_ref);
        let inner: f64 = theta
            .iter()
            .zip(theta_ref)
            .zip(&grad)
            .map(|((a, b), g)| (a - b) * g)
            .sum();
        (self.cumulant(theta) - self.cumulant(theta_ref) - inner).max(0.0)
    }

    /// `D_Ψ*(η‖η')` without domain checks. Closed forms may override.
    fn mean_divergence(&self, eta: &[f64], eta_ref: &[f64]) -> f64 {
        let grad = self.conjugate_gradient(eta_ref);
        let inner: f64 = eta
            .iter()
            .zip(eta_ref)
            .zip(&grad)
            .map(|((a, b), g)| (a - b) * g)
            .sum();
        (self.conjugate(eta) - self.conjugate(eta_ref) - inner).max(0.0)
    }
}

/// `Ψ` viewed as a [`ConvexFunction`] on natural coordinates.
pub struct Cumulant<'a, P: ?Sized>(pub &'a P);

/// `Ψ*` viewed as a [`ConvexFunction`] on mean coordinates.
pub struct Conjugate<'a, P: ?Sized>(pub &'a P);

impl<P: Potential + ?Sized> ConvexFunction for Cumulant<'_, P> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn in_domain(&self, x: &[f64]) -> bool {
        self.0.in_natural_domain(x)
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.cumulant(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.0.cumulant_gradient(x)
    }
}

impl<P: Potential + ?Sized> ConvexFunction for Conjugate<'_, P> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn in_domain(&self, x: &[f64]) -> bool {
        self.0.in_mean_domain(x)
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.conjugate(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.0.conjugate_gradient(x)
    }
}

/// Applies `∇Ψ`.
pub fn natural_to_mean<P: Potential + ?Sized>(potential: &P, theta: &[f64]) -> Result<Vec<f64>> {
    Error::check_dim(potential.dim(), theta.len())?;
    if !potential.in_natural_domain(theta) {
        return Err(Error::Domain(format!("natural parameter {theta:?}")));
    }
    Ok(potential.cumulant_gradient(theta))
}

/// Applies `(∇Ψ)⁻¹ = ∇Ψ*`.
pub fn mean_to_natural<P: Potential + ?Sized>(potential: &P, eta: &[f64]) -> Result<Vec<f64>> {
    Error::check_dim(potential.dim(), eta.len())?;
    if !potential.in_mean_domain(eta) {
        return Err(Error::Domain(format!("mean parameter {eta:?}")));
    }
    Ok(potential.conjugate_gradient(eta))
}

/// Per-sample log-likelihood `ℓ(θ; x) = ⟨θ, x⟩ − Ψ(θ)` where `x` is a value
/// of the sufficient statistic (or an average of them). Subject to the
/// dropped-constant convention of the module.
pub fn log_likelihood<P: Potential + ?Sized>(potential: &P, theta: &[f64], x: &[f64]) -> Result<f64> {
    Error::check_dim(potential.dim(), theta.len())?;
    Error::check_dim(potential.dim(), x.len())?;
    if !potential.in_natural_domain(theta) {
        return Err(Error::Domain(format!("natural parameter {theta:?}")));
    }
    Ok(dot(theta, x) - potential.cumulant(theta))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `F(x) = ‖x‖²`, used as the reference quadratic potential.
///
/// `∇Ψ(θ) = 2θ`, `Ψ*(η) = ‖η‖²/4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredNorm {
    pub dim: usize,
}

impl SquaredNorm {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl ConvexFunction for SquaredNorm {
    fn dim(&self) -> usize {
        self.dim
    }
    fn in_domain(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.is_finite())
    }
    fn value(&self, x: &[f64]) -> f64 {
        dot(x, x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| 2.0 * v).collect()
    }
}

impl Potential for SquaredNorm {
    fn dim(&self) -> usize {
        self.dim
    }
    fn in_natural_domain(&self, theta: &[f64]) -> bool {
        theta.iter().all(|v| v.is_finite())
    }
    fn in_mean_domain(&self, eta: &[f64]) -> bool {
        eta.iter().all(|v| v.is_finite())
    }
    fn cumulant(&self, theta: &[f64]) -> f64 {
        dot(theta, theta)
    }
    fn cumulant_gradient(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().map(|v| 2.0 * v).collect()
    }
    fn conjugate(&self, eta: &[f64]) -> f64 {
        0.25 * dot(eta, eta)
    }
    fn conjugate_gradient(&self, eta: &[f64]) -> Vec<f64> {
        eta.iter().map(|v| 0.5 * v).collect()
    }
    fn conjugate_hessian(&self, eta: &[f64]) -> Hessian {
        Hessian::Diagonal(vec![0.5; eta.len()])
    }
    fn natural_divergence(&self, theta: &[f64], theta_ref: &[f64]) -> f64 {
        theta.iter().zip(theta_ref).map(|(a, b)| (a - b) * (a - b)).sum()
    }
    fn mean_divergence(&self, eta: &[f64], eta_ref: &[f64]) -> f64 {
        0.25 * eta.iter().zip(eta_ref).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    }
}

/// Diagonal Gaussian with a frozen variance vector; only the mean is free.
///
/// Natural parameter `θᵢ = μᵢ/σᵢ²`, mean parameter `ηᵢ = μᵢ`,
/// `Ψ(θ) = ½ Σ σᵢ² θᵢ²`, `Ψ*(η) = ½ Σ ηᵢ²/σᵢ²`, `∇²Ψ* = diag(σ⁻²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedVarianceGaussian {
    variance: Vec<f64>,
}

impl FixedVarianceGaussian {
    pub fn new(variance: Vec<f64>) -> Result<Self> {
        if variance.is_empty() {
            return Err(Error::Empty("variance vector"));
        }
        if variance.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Domain(format!("variance must be positive: {variance:?}")));
        }
        Ok(Self {
            variance: variance.into_iter().map(|v| v.max(VARIANCE_FLOOR)).collect(),
        })
    }

    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        Self::new(vec![variance; dim])
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }
}

impl Potential for FixedVarianceGaussian {
    fn dim(&self) -> usize {
        self.variance.len()
    }
    fn in_natural_domain(&self, theta: &[f64]) -> bool {
        theta.iter().all(|v| v.is_finite())
    }
    fn in_mean_domain(&self, eta: &[f64]) -> bool {
        eta.iter().all(|v| v.is_finite())
    }
    fn cumulant(&self, theta: &[f64]) -> f64 {
        0.5 * theta.iter().zip(&self.variance).map(|(t, s)| s * t * t).sum::<f64>()
    }
    fn cumulant_gradient(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().zip(&self.variance).map(|(t, s)| s * t).collect()
    }
    fn conjugate(&self, eta: &[f64]) -> f64 {
        0.5 * eta.iter().zip(&self.variance).map(|(e, s)| e * e / s).sum::<f64>()
    }
    fn conjugate_gradient(&self, eta: &[f64]) -> Vec<f64> {
        eta.iter().zip(&self.variance).map(|(e, s)| e / s).collect()
    }
    fn conjugate_hessian(&self, _eta: &[f64]) -> Hessian {
        Hessian::Diagonal(self.variance.iter().map(|s| 1.0 / s).collect())
    }
    fn natural_divergence(&self, theta: &[f64], theta_ref: &[f64]) -> f64 {
        0.5 * theta
            .iter()
            .zip(theta_ref)
            .zip(&self.variance)
            .map(|((a, b), s)| s * (a - b) * (a - b))
            .sum::<f64>()
    }
    fn mean_divergence(&self, eta: &[f64], eta_ref: &[f64]) -> f64 {
        0.5 * eta
            .iter()
            .zip(eta_ref)
            .zip(&self.variance)
            .map(|((a, b), s)| (a - b) * (a - b) / s)
            .sum::<f64>()
    }
}

/// Diagonal Gaussian with both mean and variance free.
///
/// Parameters are laid out as two blocks of length `d`:
/// natural `θ = [μ/σ², −1/(2σ²)]` and mean `η = [μ, μ² + σ²]`.
/// `Ψ(θ) = Σ −θ₁²/(4θ₂) − ½ log(−2θ₂)` and `Ψ*(η) = Σ −½ − ½ log(η₂ − η₁²)`.
/// This potential is not quadratic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagGaussianPotential {
    /// Number of Gaussian coordinates `d`; the parameter dimension is `2d`.
    pub coords: usize,
}

impl DiagGaussianPotential {
    pub fn new(coords: usize) -> Self {
        Self { coords }
    }

    fn split<'a>(&self, p: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        p.split_at(self.coords)
    }
}

impl Potential for DiagGaussianPotential {
    fn dim(&self) -> usize {
        2 * self.coords
    }
    fn in_natural_domain(&self, theta: &[f64]) -> bool {
        let (t1, t2) = self.split(theta);
        t1.iter().all(|v| v.is_finite()) && t2.iter().all(|v| v.is_finite() && *v < 0.0)
    }
    fn in_mean_domain(&self, eta: &[f64]) -> bool {
        let (e1, e2) = self.split(eta);
        e1.iter().zip(e2).all(|(m, s)| m.is_finite() && s.is_finite() && s - m * m > 0.0)
    }
    fn cumulant(&self, theta: &[f64]) -> f64 {
        let (t1, t2) = self.split(theta);
        t1.iter()
            .zip(t2)
            .map(|(a, b)| -a * a / (4.0 * b) - 0.5 * (-2.0 * b).ln())
            .sum()
    }
    fn cumulant_gradient(&self, theta: &[f64]) -> Vec<f64> {
        let (t1, t2) = self.split(theta);
        let mut out = Vec::with_capacity(theta.len());
        out.extend(t1.iter().zip(t2).map(|(a, b)| -a / (2.0 * b)));
        out.extend(
            t1.iter()
                .zip(t2)
                .map(|(a, b)| a * a / (4.0 * b * b) - 1.0 / (2.0 * b)),
        );
        out
    }
    fn conjugate(&self, eta: &[f64]) -> f64 {
        let (e1, e2) = self.split(eta);
        e1.iter().zip(e2).map(|(m, s)| -0.5 - 0.5 * (s - m * m).ln()).sum()
    }
    fn conjugate_gradient(&self, eta: &[f64]) -> Vec<f64> {
        let (e1, e2) = self.split(eta);
        let mut out = Vec::with_capacity(eta.len());
        out.extend(e1.iter().zip(e2).map(|(m, s)| m / (s - m * m)));
        out.extend(e1.iter().zip(e2).map(|(m, s)| -0.5 / (s - m * m)));
        out
    }
    fn conjugate_hessian(&self, eta: &[f64]) -> Hessian {
        let d = self.coords;
        let (e1, e2) = self.split(eta);
        let mut h = DMatrix::zeros(2 * d, 2 * d);
        for i in 0..d {
            let (m, v) = (e1[i], e2[i] - e1[i] * e1[i]);
            h[(i, i)] = 1.0 / v + 2.0 * m * m / (v * v);
            h[(i, d + i)] = -m / (v * v);
            h[(d + i, i)] = -m / (v * v);
            h[(d + i, d + i)] = 0.5 / (v * v);
        }
        Hessian::Dense(h)
    }
}

/// A diagonal Gaussian `N(μ, diag(σ²))`, the CEM sampling distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    variance: Vec<f64>,
    /// When set, CEM updates leave the variance untouched.
    pub variance_frozen: bool,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::Empty("mean vector"));
        }
        Error::check_dim(mean.len(), variance.len())?;
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("mean"));
        }
        if variance.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Domain(format!("variance must be positive: {variance:?}")));
        }
        let mut g = Self {
            mean,
            variance,
            variance_frozen: false,
        };
        g.apply_floor(VARIANCE_FLOOR);
        Ok(g)
    }

    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, vec![variance; d])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn mean_mut(&mut self) -> &mut [f64] {
        &mut self.mean
    }

    /// Replaces the variance, flooring every entry at `floor`
    /// (at least [`VARIANCE_FLOOR`]).
    pub fn set_variance(&mut self, variance: &[f64], floor: f64) {
        self.variance.copy_from_slice(variance);
        self.apply_floor(floor);
    }

    pub fn fill_variance(&mut self, value: f64) {
        self.variance.iter_mut().for_each(|v| *v = value);
        self.apply_floor(VARIANCE_FLOOR);
    }

    fn apply_floor(&mut self, floor: f64) {
        let floor = floor.max(VARIANCE_FLOOR);
        for v in &mut self.variance {
            if !(*v >= floor) {
                *v = floor;
            }
        }
    }

    /// Natural parameters `[μ/σ², −1/(2σ²)]`.
    pub fn natural(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.dim());
        out.extend(self.mean.iter().zip(&self.variance).map(|(m, v)| m / v));
        out.extend(self.variance.iter().map(|v| -0.5 / v));
        out
    }

    pub fn from_natural(theta: &[f64]) -> Result<Self> {
        if !theta.len().is_multiple_of(2) || theta.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 2 * (theta.len() / 2).max(1),
                got: theta.len(),
            });
        }
        let potential = DiagGaussianPotential::new(theta.len() / 2);
        if !potential.in_natural_domain(theta) {
            return Err(Error::Domain(format!("natural parameter {theta:?}")));
        }
        let (t1, t2) = theta.split_at(potential.coords);
        let variance: Vec<f64> = t2.iter().map(|b| -0.5 / b).collect();
        let mean = t1.iter().zip(&variance).map(|(a, v)| a * v).collect();
        Self::new(mean, variance)
    }

    /// Mean parameters `[μ, μ² + σ²]`.
    pub fn mean_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.dim());
        out.extend_from_slice(&self.mean);
        out.extend(self.mean.iter().zip(&self.variance).map(|(m, v)| m * m + v));
        out
    }

    pub fn from_mean_params(eta: &[f64]) -> Result<Self> {
        if !eta.len().is_multiple_of(2) || eta.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 2 * (eta.len() / 2).max(1),
                got: eta.len(),
            });
        }
        let potential = DiagGaussianPotential::new(eta.len() / 2);
        if !potential.in_mean_domain(eta) {
            return Err(Error::Domain(format!("mean parameter {eta:?}")));
        }
        let (e1, e2) = eta.split_at(potential.coords);
        let variance = e1.iter().zip(e2).map(|(m, s)| s - m * m).collect();
        Self::new(e1.to_vec(), variance)
    }
}
