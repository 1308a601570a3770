//! Radial positive semi-definite kernels on parameter space.
//!
//! Both families are functions of the squared distance `r² = ‖x − y‖²`:
//!
//! * Gaussian: `k(x, y) = exp(−r² / (2ℓ²))`
//! * inverse multiquadric (IMQ): `k(x, y) = (c² + r²/ℓ²)^(−β)`
//!
//! Writing `k = φ(r²)`, the first-argument gradient is `∇₁k = 2φ'(r²)(x − y)`,
//! `∇₂k = −∇₁k`, and the cross divergence is
//! `∇₁·∇₂k = −4φ''(r²) r² − 2dφ'(r²)`. [`RadialTerms`] carries `φ`, `2φ'` and
//! `∇₁·∇₂k` for one pair so the particle loops evaluate each pair once.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Bandwidth used when every particle coincides.
pub const DEFAULT_LENGTHSCALE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian,
    InverseMultiquadric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthPolicy {
    Fixed,
    /// Recompute ℓ from the current ensemble before every drift evaluation.
    MedianPerIteration,
    /// Median divided by `√(2 ln N)`, recomputed every iteration. A pair at
    /// the median distance then has Gaussian kernel value `1/N`, which keeps
    /// the drift local in high dimension where all distances concentrate.
    MedianLogN,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lengthscale: f64,
    /// IMQ offset.
    #[serde(default = "default_c")]
    pub c: f64,
    /// IMQ exponent.
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub bandwidth: BandwidthPolicy,
    #[serde(default = "default_floor")]
    pub lengthscale_floor: f64,
}

fn default_c() -> f64 {
    1.0
}
fn default_beta() -> f64 {
    0.5
}
fn default_floor() -> f64 {
    DEFAULT_LENGTHSCALE_FLOOR
}

/// Per-pair kernel quantities for a radial kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialTerms {
    /// `k(x, y)`
    pub value: f64,
    /// `2φ'(r²)`, so that `∇₁k(x, y) = grad_coef · (x − y)`.
    pub grad_coef: f64,
    /// `∇₁·∇₂k(x, y)`
    pub div12: f64,
}

impl KernelSpec {
    pub fn gaussian(lengthscale: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Gaussian,
            lengthscale,
            c: default_c(),
            beta: default_beta(),
            bandwidth: BandwidthPolicy::Fixed,
            lengthscale_floor: DEFAULT_LENGTHSCALE_FLOOR,
        }
    }

    pub fn imq(lengthscale: f64, c: f64, beta: f64) -> Self {
        KernelSpec {
            family: KernelFamily::InverseMultiquadric,
            lengthscale,
            c,
            beta,
            bandwidth: BandwidthPolicy::Fixed,
            lengthscale_floor: DEFAULT_LENGTHSCALE_FLOOR,
        }
    }

    pub fn with_bandwidth(mut self, policy: BandwidthPolicy) -> Self {
        self.bandwidth = policy;
        self
    }

    pub fn with_lengthscale(mut self, lengthscale: f64) -> Self {
        self.lengthscale = lengthscale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::input(format!("kernel {name} must be positive and finite, got {v}")))
            }
        };
        positive(self.lengthscale, "lengthscale")?;
        positive(self.lengthscale_floor, "lengthscale floor")?;
        if self.family == KernelFamily::InverseMultiquadric {
            positive(self.c, "c")?;
            positive(self.beta, "beta")?;
        }
        Ok(())
    }

    /// Returns the spec used for an ensemble: for the median policies the
    /// lengthscale is replaced by the (scaled) median pairwise distance.
    pub fn resolve_for(&self, particles: ArrayView2<f64>) -> Result<KernelSpec> {
        match self.bandwidth {
            BandwidthPolicy::Fixed => Ok(*self),
            BandwidthPolicy::MedianPerIteration => {
                if particles.nrows() < 2 {
                    return Ok(*self);
                }
                let ell = median_heuristic_with_floor(particles, self.lengthscale_floor)?;
                Ok(self.with_lengthscale(ell))
            }
            BandwidthPolicy::MedianLogN => {
                let n = particles.nrows();
                if n < 2 {
                    return Ok(*self);
                }
                let ell = median_heuristic_with_floor(particles, self.lengthscale_floor)?;
                Ok(self.with_lengthscale(ell / (2.0 * (n as f64).ln()).sqrt()))
            }
        }
    }

    /// Kernel terms from the squared distance, in dimension `dim`.
    #[inline]
    pub fn radial_terms(&self, sq_dist: f64, dim: usize) -> RadialTerms {
        let l2 = self.lengthscale * self.lengthscale;
        let d = dim as f64;
        match self.family {
            KernelFamily::Gaussian => {
                let value = (-0.5 * sq_dist / l2).exp();
                RadialTerms {
                    value,
                    grad_coef: -value / l2,
                    div12: value * (d / l2 - sq_dist / (l2 * l2)),
                }
            }
            KernelFamily::InverseMultiquadric => {
                let beta = self.beta;
                let u = self.c * self.c + sq_dist / l2;
                let value = u.powf(-beta);
                let v1 = value / u; // u^(−β−1)
                let v2 = v1 / u; // u^(−β−2)
                RadialTerms {
                    value,
                    grad_coef: -2.0 * beta * v1 / l2,
                    div12: 2.0 * beta * d * v1 / l2 - 4.0 * beta * (beta + 1.0) * sq_dist * v2 / (l2 * l2),
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(x.len(), y.len())?;
        Ok(self.radial_terms(sq_dist(x, y), x.len()).value)
    }

    /// `∇₁k(x, y)`, the gradient in the first argument.
    pub fn grad1(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_dim(x.len(), y.len())?;
        let t = self.radial_terms(sq_dist(x, y), x.len());
        Ok(x.iter().zip(y).map(|(a, b)| t.grad_coef * (a - b)).collect())
    }

    /// `∇₁·∇₂k(x, y) = Σᵢ ∂²k / ∂xᵢ∂yᵢ`.
    pub fn div12(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(x.len(), y.len())?;
        Ok(self.radial_terms(sq_dist(x, y), x.len()).div12)
    }
}

#[inline]
pub fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Median of the `N(N−1)/2` pairwise Euclidean distances between rows.
pub fn median_heuristic(particles: ArrayView2<f64>) -> Result<f64> {
    median_heuristic_with_floor(particles, DEFAULT_LENGTHSCALE_FLOOR)
}

pub fn median_heuristic_with_floor(particles: ArrayView2<f64>, floor: f64) -> Result<f64> {
    let n = particles.nrows();
    if n < 2 {
        return Err(Error::input(format!("median heuristic needs at least 2 particles, got {n}")));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let xi = particles.row(i);
        for j in (i + 1)..n {
            let s: f64 = xi.iter().zip(particles.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            dists.push(s.sqrt());
        }
    }
    dists.sort_unstable_by(f64::total_cmp);
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if median.is_nan() {
        return Err(Error::input("particles contain NaN"));
    }
    Ok(if median > 0.0 { median } else { floor })
}
