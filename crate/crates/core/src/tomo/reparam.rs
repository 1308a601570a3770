use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::logistic;

/// `θ = lo + (hi − lo)·s(u)` mapping `ℝ` onto the open interval `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxReparam {
    pub lo: f64,
    pub hi: f64,
}

impl BoxReparam {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(BoxReparam { lo, hi })
        } else {
            Err(Error::input(format!("invalid box [{lo}, {hi}]")))
        }
    }

    #[inline]
    pub fn forward(&self, u: f64) -> f64 {
        self.lo + (self.hi - self.lo) * logistic(u)
    }

    pub fn backward(&self, theta: f64) -> Result<f64> {
        if !(theta > self.lo && theta < self.hi) {
            return Err(Error::input(format!("{theta} is not strictly inside ({}, {})", self.lo, self.hi)));
        }
        Ok(((theta - self.lo) / (self.hi - theta)).ln())
    }

    /// `dθ/du = (hi − lo)·s(u)(1 − s(u))`.
    #[inline]
    pub fn jacobian(&self, u: f64) -> f64 {
        let s = logistic(u);
        (self.hi - self.lo) * s * (1.0 - s)
    }

    pub fn forward_all(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|&v| self.forward(v)).collect()
    }

    pub fn backward_all(&self, theta: &[f64]) -> Result<Vec<f64>> {
        theta.iter().map(|&t| self.backward(t)).collect()
    }

    /// Converts a gradient in `θ` into the gradient in `u`.
    pub fn pull_back(&self, u: &[f64], grad_theta: &[f64]) -> Vec<f64> {
        u.iter().zip(grad_theta).map(|(&v, g)| g * self.jacobian(v)).collect()
    }
}
