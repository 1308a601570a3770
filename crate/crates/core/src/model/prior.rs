use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::model::regression::logistic;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PriorKind {
    /// Independent `N(mean, sd²)` coordinates.
    GaussianIso { mean: f64, sd: f64 },
    /// Independent `Uniform[lo, hi]` coordinates expressed through
    /// `θ = lo + (hi − lo)·s(u)` with the logistic `s`; the density lives on `u`.
    UniformBoxReparam { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prior {
    pub kind: PriorKind,
    pub dim: usize,
}

impl Prior {
    pub fn gaussian(dim: usize, mean: f64, sd: f64) -> Result<Self> {
        let p = Prior { kind: PriorKind::GaussianIso { mean, sd }, dim };
        p.validate()?;
        Ok(p)
    }

    pub fn uniform_box(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        let p = Prior { kind: PriorKind::UniformBoxReparam { lo, hi }, dim };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::input("prior dimension must be positive"));
        }
        match self.kind {
            PriorKind::GaussianIso { mean, sd } if mean.is_finite() && sd > 0.0 && sd.is_finite() => Ok(()),
            PriorKind::UniformBoxReparam { lo, hi } if lo.is_finite() && hi.is_finite() && lo < hi => Ok(()),
            _ => Err(Error::input(format!("invalid prior {:?}", self.kind))),
        }
    }

    /// `log q₀(θ)` up to an additive constant and its exact gradient.
    pub fn log_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.dim, theta.len())?;
        check_finite(theta, "parameter")?;
        let mut grad = vec![0.0; self.dim];
        let lp = self.log_density_unchecked(theta);
        self.add_score(theta, &mut grad);
        Ok((lp, grad))
    }

    fn log_density_unchecked(&self, theta: &[f64]) -> f64 {
        match self.kind {
            PriorKind::GaussianIso { mean, sd } => {
                -0.5 * theta.iter().map(|t| ((t - mean) / sd).powi(2)).sum::<f64>()
            }
            // log s(u) + log(1 − s(u)) = −softplus(−u) − softplus(u)
            PriorKind::UniformBoxReparam { .. } => theta.iter().map(|&u| -softplus(-u) - softplus(u)).sum(),
        }
    }

    /// Adds `∇ log q₀(θ)` to `out`.
    #[inline]
    pub fn add_score(&self, theta: &[f64], out: &mut [f64]) {
        match self.kind {
            PriorKind::GaussianIso { mean, sd } => {
                let prec = 1.0 / (sd * sd);
                for (o, t) in out.iter_mut().zip(theta) {
                    *o -= (t - mean) * prec;
                }
            }
            PriorKind::UniformBoxReparam { .. } => {
                for (o, &u) in out.iter_mut().zip(theta) {
                    *o += 1.0 - 2.0 * logistic(u);
                }
            }
        }
    }

    /// Draws `n` independent rows.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Array2<f64> {
        let mut out = Array2::zeros((n, self.dim));
        for v in out.iter_mut() {
            *v = match self.kind {
                PriorKind::GaussianIso { mean, sd } => {
                    let z: f64 = rng.sample(StandardNormal);
                    mean + sd * z
                }
                PriorKind::UniformBoxReparam { .. } => {
                    let p: f64 = loop {
                        let p: f64 = rng.random();
                        if p > 0.0 {
                            break p;
                        }
                    };
                    (p / (1.0 - p)).ln()
                }
            };
        }
        out
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
