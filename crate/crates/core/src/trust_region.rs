//! Sampling from a Bregman ball around the ensemble centroid.
//!
//! The ball `{θ : D_Ψ(θ‖θ_c) ≤ Δ}` is handled through its dual description
//! `S = {η : D_Ψ*(η_c‖η) ≤ Δ}` in mean coordinates. Three samplers are
//! provided:
//!
//! * [`TrustRegion::exact_sample`] draws a direction, root-solves the radial
//!   divergence for the boundary and places the point at `u^{1/d}` of the
//!   way out. Given the direction the radius has the volume-uniform law;
//!   the direction itself is uniform on the sphere, so the point is
//!   volume-uniform on `S` only when `ρ_max` does not depend on direction.
//! * [`TrustRegion::proxy_sample`] replaces `S` by the ellipsoid
//!   `(η−η_c)ᵀH(η−η_c) ≤ 2Δ` with `H = ∇²Ψ*(η_c)` and draws the radius
//!   uniformly on `[−ρ̂, ρ̂]`. This is a line density along the direction,
//!   not the `u^{1/d}` radial law of the exact sampler.
//! * [`diag_box_sample`] handles the diagonal fixed-variance Gaussian, where
//!   every coordinate is drawn independently from `η_cᵢ ± √(2Δσᵢ²)`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::expfam::{Hessian, Potential};

pub use crate::rng::RngStream;

/// Dimension above which the automatic dispatch prefers the proxy sampler.
pub const PROXY_DIM_THRESHOLD: usize = 100;

const MAX_EXPANSIONS: usize = 100;
const MAX_ROOT_ITERATIONS: usize = 200;
const MAX_BOUNDARY_BISECTIONS: usize = 100;

/// Uniform direction on the unit sphere `S^{d−1}` (normalised Gaussian).
pub fn uniform_sphere_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::Empty("sphere dimension"));
    }
    let mut v = vec![0.0; dim];
    loop {
        for x in v.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-150 && norm.is_finite() {
            v.iter_mut().for_each(|x| *x /= norm);
            return Ok(v);
        }
    }
}

/// Which sampler a replacement step uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    Exact,
    Proxy,
    DiagBox,
}

impl SamplerKind {
    /// Box sampler for diagonal fixed-variance geometry, proxy above
    /// [`PROXY_DIM_THRESHOLD`] dimensions, exact otherwise.
    pub fn auto(fixed_variance_diagonal: bool, dim: usize) -> Self {
        if fixed_variance_diagonal {
            SamplerKind::DiagBox
        } else if dim > PROXY_DIM_THRESHOLD {
            SamplerKind::Proxy
        } else {
            SamplerKind::Exact
        }
    }
}

/// A Bregman ball of radius `radius` around `center_eta` (mean coordinates).
#[derive(Debug, Clone)]
pub struct TrustRegion<'a, P: ?Sized> {
    center_eta: Vec<f64>,
    radius: f64,
    potential: &'a P,
}

impl<'a, P: Potential + ?Sized> TrustRegion<'a, P> {
    pub fn new(potential: &'a P, center_eta: Vec<f64>, radius: f64) -> Result<Self> {
        Error::check_dim(potential.dim(), center_eta.len())?;
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "trust radius must be positive and finite, got {radius}"
            )));
        }
        if !potential.in_mean_domain(&center_eta) {
            return Err(Error::Domain(format!("trust-region center {center_eta:?}")));
        }
        Ok(Self {
            center_eta,
            radius,
            potential,
        })
    }

    pub fn center(&self) -> &[f64] {
        &self.center_eta
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn potential(&self) -> &P {
        self.potential
    }

    pub fn dim(&self) -> usize {
        self.center_eta.len()
    }

    /// `D_Ψ*(η_c‖η)`; the membership test is `divergence_from_center(η) ≤ Δ`.
    pub fn divergence_from_center(&self, eta: &[f64]) -> Result<f64> {
        Error::check_dim(self.dim(), eta.len())?;
        if !self.potential.in_mean_domain(eta) {
            return Err(Error::Domain(format!("mean parameter {eta:?}")));
        }
        Ok(self.potential.mean_divergence(&self.center_eta, eta))
    }

    pub fn contains(&self, eta: &[f64]) -> bool {
        matches!(self.divergence_from_center(eta), Ok(d) if d <= self.radius)
    }

    fn point_on_ray(&self, v: &[f64], rho: f64) -> Vec<f64> {
        self.center_eta.iter().zip(v).map(|(c, x)| c + rho * x).collect()
    }

    /// Radial divergence `g_v(ρ) = D_Ψ*(η_c‖η_c + ρv)`.
    pub fn radial_divergence(&self, v: &[f64], rho: f64) -> Result<f64> {
        Error::check_dim(self.dim(), v.len())?;
        if !(rho >= 0.0) {
            return Err(Error::InvalidConfig(format!("radius along ray must be >= 0, got {rho}")));
        }
        if rho == 0.0 {
            return Ok(0.0);
        }
        let eta = self.point_on_ray(v, rho);
        if !self.potential.in_mean_domain(&eta) {
            return Err(Error::DomainExit {
                last_feasible: self.feasible_limit(v, rho),
            });
        }
        Ok(self.potential.mean_divergence(&self.center_eta, &eta))
    }

    /// Largest feasible radius in `[0, rho]` along `v`, by bisection.
    fn feasible_limit(&self, v: &[f64], rho: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, rho);
        for _ in 0..MAX_BOUNDARY_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.potential.in_mean_domain(&self.point_on_ray(v, mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Boundary radius `ρ_max(v)` with `g_v(ρ_max) = Δ`.
    ///
    /// Brackets by doubling from the local quadratic estimate, then refines
    /// with secant steps safeguarded by bisection until
    /// `|g_v(ρ) − Δ| ≤ 1e−10·max(1, Δ)`. The returned radius always satisfies
    /// `g_v(ρ) ≤ Δ`. If the ray leaves the domain first, the ball is truncated
    /// there and the last feasible radius is returned.
    pub fn rho_max(&self, v: &[f64]) -> Result<f64> {
        Error::check_dim(self.dim(), v.len())?;
        let target = self.radius;
        let tol = 1e-10 * target.max(1.0);
        let g = |rho: f64| -> Option<f64> {
            let eta = self.point_on_ray(v, rho);
            if self.potential.in_mean_domain(&eta) {
                Some(self.potential.mean_divergence(&self.center_eta, &eta))
            } else {
                None
            }
        };

        let hessian = self.potential.conjugate_hessian(&self.center_eta);
        let scale = hessian.trace() / self.dim() as f64;
        let mut hi = if scale > 0.0 && scale.is_finite() {
            (2.0 * target / scale).sqrt()
        } else {
            1.0
        };
        let (mut lo, mut g_lo) = (0.0, 0.0);
        let mut g_hi = None;

        for _ in 0..MAX_EXPANSIONS {
            match g(hi) {
                Some(val) if val >= target => {
                    g_hi = Some(val);
                    break;
                }
                Some(val) => {
                    lo = hi;
                    g_lo = val;
                    hi *= 2.0;
                }
                None => {
                    // Ray exits the domain inside (lo, hi): locate the boundary
                    // while watching for the level set.
                    let mut out = hi;
                    for _ in 0..MAX_BOUNDARY_BISECTIONS {
                        let mid = 0.5 * (lo + out);
                        if mid <= lo || mid >= out {
                            break;
                        }
                        match g(mid) {
                            Some(val) if val >= target => {
                                hi = mid;
                                g_hi = Some(val);
                                break;
                            }
                            Some(val) => {
                                lo = mid;
                                g_lo = val;
                            }
                            None => out = mid,
                        }
                    }
                    if g_hi.is_none() {
                        return Ok(lo);
                    }
                    break;
                }
            }
            if !hi.is_finite() {
                break;
            }
        }
        let Some(g_hi) = g_hi else {
            return Err(Error::RootBracket {
                target,
                expansions: MAX_EXPANSIONS,
            });
        };
        if (g_hi - target).abs() <= tol && g_hi <= target {
            return Ok(hi);
        }

        // f(ρ) = g(ρ) − Δ with f(a) < 0 ≤ f(b); the secant runs on the two
        // latest iterates and falls back to bisection when it leaves the
        // bracket or the bracket stops halving.
        let (mut a, mut b) = (lo, hi);
        let (mut x_prev, mut f_prev) = (lo, g_lo - target);
        let (mut x_cur, mut f_cur) = (hi, g_hi - target);
        let mut width = b - a;
        for _ in 0..MAX_ROOT_ITERATIONS {
            let mut x = if f_cur != f_prev {
                x_cur - f_cur * (x_cur - x_prev) / (f_cur - f_prev)
            } else {
                f64::NAN
            };
            if !(x > a && x < b) || (b - a) > 0.5 * width {
                x = 0.5 * (a + b);
                width = b - a;
            }
            let Some(gx) = g(x) else {
                b = x;
                continue;
            };
            let fx = gx - target;
            if fx.abs() <= tol && fx <= 0.0 {
                return Ok(x);
            }
            if fx < 0.0 {
                a = x;
            } else {
                b = x;
            }
            (x_prev, f_prev) = (x_cur, f_cur);
            (x_cur, f_cur) = (x, fx);
            if b - a <= 4.0 * f64::EPSILON * b {
                break;
            }
        }
        Ok(a)
    }

    /// `η_c + u^{1/d} ρ_max(v) v` with `v` uniform on the sphere.
    ///
    /// Always inside `S`. The normalised radius `ρ/ρ_max(v)` has CDF `r^d`;
    /// a direction is chosen with probability independent of how far `S`
    /// extends along it, so an elongated ball is under-sampled along its
    /// long axes relative to a volume-uniform draw.
    pub fn exact_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let v = uniform_sphere_direction(self.dim(), rng)?;
        let rho = self.rho_max(&v)?;
        let u: f64 = rng.random();
        let r = u.powf(1.0 / self.dim() as f64) * rho;
        Ok(self.point_on_ray(&v, r))
    }

    /// Draw from the quadratic proxy region using the given Hessian
    /// (normally `∇²Ψ*(η_c)`).
    pub fn proxy_sample<R: Rng + ?Sized>(&self, hessian: &Hessian, rng: &mut R) -> Result<Vec<f64>> {
        Error::check_dim(self.dim(), hessian.dim())?;
        hessian.check_positive_definite()?;
        let v = uniform_sphere_direction(self.dim(), rng)?;
        let rho_hat = proxy_rho_max(hessian, &v, self.radius);
        let t = rng.random_range(-rho_hat..=rho_hat);
        Ok(self.point_on_ray(&v, t))
    }

    /// Draw with the requested sampler. The box sampler needs a diagonal
    /// Hessian and uses `σᵢ² = 1/hᵢ`.
    pub fn sample<R: Rng + ?Sized>(&self, kind: SamplerKind, rng: &mut R) -> Result<Vec<f64>> {
        match kind {
            SamplerKind::Exact => self.exact_sample(rng),
            SamplerKind::Proxy => {
                let h = self.potential.conjugate_hessian(&self.center_eta);
                self.proxy_sample(&h, rng)
            }
            SamplerKind::DiagBox => match self.potential.conjugate_hessian(&self.center_eta) {
                Hessian::Diagonal(h) => {
                    let sigma2: Vec<f64> = h.iter().map(|x| 1.0 / x).collect();
                    diag_box_sample(&self.center_eta, self.radius, &sigma2, rng)
                }
                Hessian::Dense(_) => Err(Error::InvalidConfig(
                    "box sampler requires a diagonal Hessian".into(),
                )),
            },
        }
    }
}

/// `ρ̂_max(v) = √(2Δ / vᵀHv)`.
pub fn proxy_rho_max(hessian: &Hessian, v: &[f64], radius: f64) -> f64 {
    (2.0 * radius / hessian.quadratic_form(v)).sqrt()
}

/// Independent coordinate draws `ηᵢ ~ U[η_cᵢ − √(2Δσᵢ²), η_cᵢ + √(2Δσᵢ²)]`.
pub fn diag_box_sample<R: Rng + ?Sized>(
    center_eta: &[f64],
    delta: f64,
    sigma2: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; center_eta.len()];
    diag_box_sample_into(center_eta, delta, sigma2, rng, &mut out)?;
    Ok(out)
}

/// [`diag_box_sample`] writing into `out`.
pub fn diag_box_sample_into<R: Rng + ?Sized>(
    center_eta: &[f64],
    delta: f64,
    sigma2: &[f64],
    rng: &mut R,
    out: &mut [f64],
) -> Result<()> {
    Error::check_dim(center_eta.len(), sigma2.len())?;
    Error::check_dim(center_eta.len(), out.len())?;
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidConfig(format!("trust radius must be >= 0, got {delta}")));
    }
    if sigma2.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::Domain(format!("variance must be positive: {sigma2:?}")));
    }
    for ((o, c), s) in out.iter_mut().zip(center_eta).zip(sigma2) {
        let half = (2.0 * delta * s).sqrt();
        let u: f64 = rng.random();
        *o = c + half * (2.0 * u - 1.0);
    }
    Ok(())
}
