//! Gaussian regression likelihoods `y | x, θ ~ N(f_θ(x), Σ)` with diagonal `Σ`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::model::Dataset;
use crate::tomo::TravelTimeModel;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// The regression function `f_θ`.
#[derive(Debug, Clone)]
pub enum RegressionFn {
    /// `θ x²`
    Quadratic,
    /// `1 / (1 + exp(−θ x))`
    Sigmoid,
    /// `θ₁ + θ₂ x`
    Linear2,
    /// `Σ_{k=1..terms} θ_k sin(k x)`
    SinusoidSum { terms: usize },
    /// First-arrival times between sensor pairs; the covariate is a channel id.
    TravelTime(Arc<TravelTimeModel>),
}

/// Diagonal measurement-error model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// `Σ = σ² I`
    Isotropic { sd: f64 },
    /// Per-channel standard deviation, indexed by the integer channel id held
    /// in the first covariate.
    PerChannel { sd: Vec<f64> },
}

impl NoiseModel {
    #[inline]
    fn sd_for(&self, x: &[f64]) -> Result<f64> {
        match self {
            NoiseModel::Isotropic { sd } => Ok(*sd),
            NoiseModel::PerChannel { sd } => {
                let c = channel_id(x)?;
                sd.get(c).copied().ok_or_else(|| Error::input(format!("channel {c} has no noise level")))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            NoiseModel::Isotropic { sd } => *sd > 0.0 && sd.is_finite(),
            NoiseModel::PerChannel { sd } => !sd.is_empty() && sd.iter().all(|s| *s > 0.0 && s.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::input("noise standard deviations must be positive"))
        }
    }
}

pub(crate) fn channel_id(x: &[f64]) -> Result<usize> {
    match x.first() {
        Some(&c) if c >= 0.0 && c.fract() == 0.0 => Ok(c as usize),
        _ => Err(Error::input("covariate is not a channel id")),
    }
}

#[derive(Debug, Clone)]
pub struct RegressionModel {
    pub function: RegressionFn,
    pub noise: NoiseModel,
}

impl RegressionModel {
    pub fn new(function: RegressionFn, noise: NoiseModel) -> Result<Self> {
        noise.validate()?;
        if let RegressionFn::SinusoidSum { terms: 0 } = function {
            return Err(Error::input("sinusoid model needs at least one term"));
        }
        Ok(RegressionModel { function, noise })
    }

    pub fn isotropic(function: RegressionFn, sd: f64) -> Result<Self> {
        Self::new(function, NoiseModel::Isotropic { sd })
    }

    pub fn param_dim(&self) -> usize {
        match &self.function {
            RegressionFn::Quadratic | RegressionFn::Sigmoid => 1,
            RegressionFn::Linear2 => 2,
            RegressionFn::SinusoidSum { terms } => *terms,
            RegressionFn::TravelTime(m) => m.param_dim(),
        }
    }

    /// Every catalog model has scalar responses.
    pub fn response_dim(&self) -> usize {
        1
    }

    pub fn covariate_dim(&self) -> usize {
        1
    }

    pub fn isotropic_sd(&self) -> Option<f64> {
        match self.noise {
            NoiseModel::Isotropic { sd } => Some(sd),
            NoiseModel::PerChannel { .. } => None,
        }
    }

    /// `f_θ(x)` for the closed-form regression functions, with the gradient
    /// `∇_θ f_θ(x)` written to `grad` when given.
    #[inline(always)]
    fn analytic(&self, theta: &[f64], x: f64, grad: Option<&mut [f64]>) -> f64 {
        match &self.function {
            RegressionFn::Quadratic => {
                let x2 = x * x;
                if let Some(g) = grad {
                    g[0] = x2;
                }
                theta[0] * x2
            }
            RegressionFn::Sigmoid => {
                let f = logistic(theta[0] * x);
                if let Some(g) = grad {
                    g[0] = x * f * (1.0 - f);
                }
                f
            }
            RegressionFn::Linear2 => {
                if let Some(g) = grad {
                    g[0] = 1.0;
                    g[1] = x;
                }
                theta[0] + theta[1] * x
            }
            RegressionFn::SinusoidSum { .. } => match grad {
                Some(g) => {
                    let mut f = 0.0;
                    for (k, (t, gk)) in theta.iter().zip(g.iter_mut()).enumerate() {
                        let s = ((k + 1) as f64 * x).sin();
                        *gk = s;
                        f += t * s;
                    }
                    f
                }
                None => theta.iter().enumerate().map(|(k, t)| t * ((k + 1) as f64 * x).sin()).sum(),
            },
            RegressionFn::TravelTime(_) => unreachable!("travel-time model has no closed form"),
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        check_dim(self.param_dim(), theta.len())?;
        check_finite(theta, "parameter")
    }

    /// `f_θ(x)` at a single covariate.
    pub fn predict_point(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        match &self.function {
            RegressionFn::TravelTime(m) => m.predict_channel(theta, channel_id(x)?),
            _ => Ok(self.analytic(theta, covariate(x)?, None)),
        }
    }

    /// `f_θ(xᵢ)` for every datum.
    pub fn predict(&self, theta: &[f64], data: &Dataset) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        match &self.function {
            RegressionFn::TravelTime(m) => m.predict_channels(theta, &channel_ids(data)?),
            _ => data.x.rows().into_iter().map(|x| Ok(self.analytic(theta, x[0], None))).collect(),
        }
    }

    /// `log N(y; f_θ(x), Σ)` with the full multivariate normalization.
    pub fn log_density(&self, theta: &[f64], x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(self.response_dim(), y.len())?;
        check_finite(y, "response")?;
        let f = self.predict_point(theta, x)?;
        let sd = self.noise.sd_for(x)?;
        Ok(gaussian_log_density(y[0], f, sd))
    }

    /// `∇_θ log p_θ(y | x) = (∇_θ f_θ(x)) Σ⁻¹ (y − f_θ(x))`.
    pub fn grad_log_density(&self, theta: &[f64], x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.response_dim(), y.len())?;
        check_finite(y, "response")?;
        self.check_theta(theta)?;
        let sd = self.noise.sd_for(x)?;
        match &self.function {
            RegressionFn::TravelTime(m) => {
                let c = channel_id(x)?;
                let f = m.predict_channel(theta, c)?;
                m.score(theta, &[c], &[(y[0] - f) / (sd * sd)])
            }
            _ => {
                let mut g = vec![0.0; self.param_dim()];
                let f = self.analytic(theta, covariate(x)?, Some(&mut g));
                let r = (y[0] - f) / (sd * sd);
                g.iter_mut().for_each(|v| *v *= r);
                Ok(g)
            }
        }
    }

    /// Per-datum log densities `log p_θ(yᵢ | xᵢ)` written into `out`.
    pub fn log_likelihoods(&self, theta: &[f64], data: &Dataset, out: &mut [f64]) -> Result<()> {
        check_dim(data.len(), out.len())?;
        let preds = match &self.function {
            RegressionFn::TravelTime(_) => Some(self.predict(theta, data)?),
            _ => None,
        };
        let iso = self.isotropic_sd().map(|sd| (-HALF_LN_2PI - sd.ln(), 1.0 / sd));
        for (i, (x, y)) in data.x.rows().into_iter().zip(data.y.rows()).enumerate() {
            let xs = x.as_slice().expect("row-major covariates");
            let f = match &preds {
                Some(p) => p[i],
                None => self.analytic(theta, xs[0], None),
            };
            out[i] = match iso {
                Some((c, inv_sd)) => {
                    let z = (y[0] - f) * inv_sd;
                    c - 0.5 * z * z
                }
                None => gaussian_log_density(y[0], f, self.noise.sd_for(xs)?),
            };
        }
        Ok(())
    }

    /// `Σᵢ wᵢ ∇_θ log p_θ(yᵢ | xᵢ)` written into `out`; unit weights when `weights` is `None`.
    pub fn weighted_score(&self, theta: &[f64], data: &Dataset, weights: Option<&[f64]>, out: &mut [f64]) -> Result<()> {
        let d = self.param_dim();
        check_dim(d, out.len())?;
        if let Some(w) = weights {
            check_dim(data.len(), w.len())?;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        if let Some(sd) = self.closed_form_sd() {
            let (var, ys) = (sd * sd, responses(data));
            let mut grad = vec![0.0; d];
            self.visit_closed_form(theta, covariates(data), &mut grad, |i, f, g| {
                let mut r = (ys[i] - f) / var;
                if let Some(w) = weights {
                    r *= w[i];
                }
                for (o, g) in out.iter_mut().zip(g) {
                    *o += r * g;
                }
            });
            return Ok(());
        }
        match &self.function {
            RegressionFn::TravelTime(m) => {
                let channels = channel_ids(data)?;
                let preds = m.predict_channels(theta, &channels)?;
                let mut cot = Vec::with_capacity(channels.len());
                for (i, (&c, y)) in channels.iter().zip(data.y.column(0)).enumerate() {
                    let sd = self.noise.sd_for(&[c as f64])?;
                    let w = weights.map_or(1.0, |w| w[i]);
                    cot.push(w * (y - preds[i]) / (sd * sd));
                }
                let g = m.score(theta, &channels, &cot)?;
                out.copy_from_slice(&g);
            }
            _ => {
                let mut grad = vec![0.0; d];
                for (i, (x, y)) in data.x.rows().into_iter().zip(data.y.rows()).enumerate() {
                    let xs = x.as_slice().expect("row-major covariates");
                    let f = self.analytic(theta, xs[0], Some(&mut grad));
                    let sd = self.noise.sd_for(xs)?;
                    let mut r = (y[0] - f) / (sd * sd);
                    if let Some(w) = weights {
                        r *= w[i];
                    }
                    for (o, g) in out.iter_mut().zip(&grad) {
                        *o += r * g;
                    }
                }
            }
        }
        Ok(())
    }

    /// Calls `visit(i, f_θ(xᵢ), ∇_θ f_θ(xᵢ))` for every covariate. The match
    /// on the function is hoisted out of the loop.
    #[inline(always)]
    fn visit_closed_form(&self, theta: &[f64], xs: &[f64], grad: &mut [f64], mut visit: impl FnMut(usize, f64, &[f64])) {
        macro_rules! each {
            () => {
                for (i, &x) in xs.iter().enumerate() {
                    let f = self.analytic(theta, x, Some(&mut *grad));
                    visit(i, f, grad);
                }
            };
        }
        match &self.function {
            RegressionFn::Quadratic => each!(),
            RegressionFn::Sigmoid => each!(),
            RegressionFn::Linear2 => each!(),
            RegressionFn::SinusoidSum { .. } => each!(),
            RegressionFn::TravelTime(_) => unreachable!("travel-time model has no closed form"),
        }
    }

    /// Closed-form model with isotropic noise: its noise sd. `None` otherwise.
    fn closed_form_sd(&self) -> Option<f64> {
        match self.function {
            RegressionFn::TravelTime(_) => None,
            _ => self.isotropic_sd(),
        }
    }

    /// One pass over the data for a closed-form model with isotropic noise:
    /// the log densities, the residuals `(yᵢ − f)/σ²` and the gradients
    /// `∇_θ f_θ(xᵢ)` (row-major `n × d`). Returns false for any other model.
    pub(crate) fn score_terms_into(&self, theta: &[f64], data: &Dataset, loglik: &mut [f64], resid: &mut [f64], grads: &mut [f64]) -> bool {
        let Some(sd) = self.closed_form_sd() else { return false };
        let d = self.param_dim();
        let (c, inv_sd, var) = (-HALF_LN_2PI - sd.ln(), 1.0 / sd, sd * sd);
        let ys = responses(data);
        let mut g = vec![0.0; d];
        self.visit_closed_form(theta, covariates(data), &mut g, |i, f, g| {
            let z = (ys[i] - f) * inv_sd;
            loglik[i] = c - 0.5 * z * z;
            resid[i] = (ys[i] - f) / var;
            grads[i * d..(i + 1) * d].iter_mut().zip(g).for_each(|(o, v)| *o = *v);
        });
        true
    }
}

fn covariates(data: &Dataset) -> &[f64] {
    data.x.as_slice().expect("row-major covariates")
}

fn responses(data: &Dataset) -> &[f64] {
    data.y.as_slice().expect("row-major responses")
}

/// `Σᵢ wᵢ rᵢ gᵢ` over rows of `grads`, rounding exactly as `weighted_score`.
pub(crate) fn weighted_terms(resid: &[f64], grads: &[f64], weights: &[f64], out: &mut [f64]) {
    let d = out.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for (i, (&r, &w)) in resid.iter().zip(weights).enumerate() {
        let r = r * w;
        for (o, g) in out.iter_mut().zip(&grads[i * d..(i + 1) * d]) {
            *o += r * g;
        }
    }
}

#[inline]
pub(crate) fn gaussian_log_density(y: f64, mean: f64, sd: f64) -> f64 {
    let z = (y - mean) / sd;
    -HALF_LN_2PI - sd.ln() - 0.5 * z * z
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn covariate(x: &[f64]) -> Result<f64> {
    match x.first() {
        Some(v) if v.is_finite() => Ok(*v),
        _ => Err(Error::input("covariate must be a finite scalar")),
    }
}

fn channel_ids(data: &Dataset) -> Result<Vec<usize>> {
    data.x.rows().into_iter().map(|x| channel_id(x.as_slice().expect("row-major covariates"))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn catalog() -> Vec<RegressionModel> {
        vec![
            RegressionModel::isotropic(RegressionFn::Quadratic, 0.5).unwrap(),
            RegressionModel::isotropic(RegressionFn::Sigmoid, 0.05).unwrap(),
            RegressionModel::isotropic(RegressionFn::Linear2, 0.8).unwrap(),
            RegressionModel::isotropic(RegressionFn::SinusoidSum { terms: 4 }, 0.2).unwrap(),
        ]
    }

    #[test]
    fn half_log_two_pi() {
        assert_relative_eq!(HALF_LN_2PI, 0.5 * (2.0 * PI).ln(), epsilon = 1e-16);
    }

    #[test]
    fn zero_residual_density() {
        let m = RegressionModel::isotropic(RegressionFn::Linear2, 1.0).unwrap();
        let lp = m.log_density(&[1.0, 2.0], &[0.5], &[2.0]).unwrap();
        assert_relative_eq!(lp, -0.9189385332046727, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_reference_values() {
        let m = RegressionModel::isotropic(RegressionFn::Quadratic, 0.5).unwrap();
        let lp = m.log_density(&[5.0], &[1.0], &[5.0]).unwrap();
        assert_relative_eq!(lp, -0.2257913526447274, epsilon = 1e-12);
        let g = m.grad_log_density(&[5.0], &[1.0], &[6.0]).unwrap();
        assert_relative_eq!(g[0], 4.0, epsilon = 1e-12);
        let g = m.grad_log_density(&[5.0], &[0.3], &[5.0 * 0.09]).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn density_integrates_to_one() {
        let m = RegressionModel::isotropic(RegressionFn::Sigmoid, 0.05).unwrap();
        let (lo, hi, steps) = (-1.0, 2.0, 30_000);
        let h = (hi - lo) / steps as f64;
        let mass: f64 = (0..=steps)
            .map(|k| {
                let y = lo + k as f64 * h;
                let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
                w * m.log_density(&[2.0], &[0.3], &[y]).unwrap().exp()
            })
            .sum::<f64>()
            * h;
        assert!((mass - 1.0).abs() < 1e-4, "mass {mass}");
    }

    #[test]
    fn score_matches_finite_differences() {
        let mut rng = crate::seed::rng(3);
        for m in catalog() {
            let d = m.param_dim();
            for _ in 0..100 {
                let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
                let x = [rng.random_range(-2.0..2.0)];
                let y = [rng.random_range(-2.0..2.0)];
                let g = m.grad_log_density(&theta, &x, &y).unwrap();
                for k in 0..d {
                    let h = 1e-6;
                    let mut tp = theta.clone();
                    let mut tm = theta.clone();
                    tp[k] += h;
                    tm[k] -= h;
                    let fd = (m.log_density(&tp, &x, &y).unwrap() - m.log_density(&tm, &x, &y).unwrap()) / (2.0 * h);
                    let scale = g[k].abs().max(1e-2);
                    assert!((g[k] - fd).abs() / scale < 1e-5, "{:?}: {} vs {}", m.function, g[k], fd);
                }
            }
        }
    }

    #[test]
    fn log_density_is_concave_in_response() {
        let m = RegressionModel::isotropic(RegressionFn::Quadratic, 0.5).unwrap();
        let h = 0.01;
        for k in -200..200 {
            let y = k as f64 * 0.03;
            let f = |y: f64| m.log_density(&[1.5], &[0.7], &[y]).unwrap();
            assert!(f(y + h) - 2.0 * f(y) + f(y - h) < 0.0);
        }
    }

    #[test]
    fn sigmoid_is_bounded_in_theta() {
        let m = RegressionModel::isotropic(RegressionFn::Sigmoid, 0.05).unwrap();
        let mut rng = crate::seed::rng(9);
        for _ in 0..10_000 {
            let theta = [rng.random_range(-1e3..1e3)];
            let x = [rng.random_range(-1.0..1.0)];
            let f = m.predict_point(&theta, &x).unwrap();
            assert!((0.0..=1.0).contains(&f));
            // ∇_θ f = x f (1 − f) ≤ |x| / 4
            let g = m.grad_log_density(&theta, &x, &[f]).unwrap();
            assert_eq!(g[0], 0.0);
            let mut grad = [0.0];
            m.analytic(&theta, x[0], Some(&mut grad));
            assert!(grad[0].abs() <= 0.25 + 1e-15);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = RegressionModel::isotropic(RegressionFn::Quadratic, 0.5).unwrap();
        assert!(m.log_density(&[f64::NAN], &[1.0], &[0.0]).is_err());
        assert!(m.log_density(&[1.0], &[1.0], &[f64::INFINITY]).is_err());
        assert!(m.grad_log_density(&[1.0, 2.0], &[1.0], &[0.0]).is_err());
        assert!(RegressionModel::isotropic(RegressionFn::Quadratic, 0.0).is_err());
        assert!(RegressionModel::isotropic(RegressionFn::SinusoidSum { terms: 0 }, 1.0).is_err());
    }

    #[test]
    fn logistic_is_stable() {
        assert_eq!(logistic(-1000.0), 0.0);
        assert_eq!(logistic(1000.0), 1.0);
        assert_relative_eq!(logistic(0.3) + logistic(-0.3), 1.0, epsilon = 1e-15);
    }
}
