//! Variational gradient descent for the Bayes and PrO targets.
//!
//! Every iteration computes the score `s_t(θ_r) = ∇log q₀(θ_r) + Σᵢ wᵢ ∇log p_{θ_r}(yᵢ|xᵢ)`
//! for all particles (unit weights for Bayes, PrO weights otherwise), then
//! moves every particle along
//!
//! ```text
//! drift(θᵢ) = (1/N) Σ_r [∇₁k(θ_r, θᵢ) + s_t(θ_r) k(θ_r, θᵢ)]
//! ```
//!
//! with an explicit Euler step. All drifts are evaluated on the time-`t`
//! ensemble before any particle moves, and every reduction runs in a fixed
//! order, so a run is bit-reproducible for any thread count.

mod io;
mod presets;

pub use io::{EnsembleMeta, KgdPoint, KgdTrace};
pub use presets::{simulation_config, step_size_for, DEFAULT_INIT_SD, DEFAULT_PRIOR_SD, SIMULATION_ITERATIONS, SIMULATION_PARTICLES};

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernels::KernelSpec;
use crate::model::{weighted_terms, Dataset, Prior, RegressionModel};
use crate::seed::{self, derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Bayes,
    #[serde(rename = "pro")]
    PrO,
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Target::Bayes => "bayes",
            Target::PrO => "pro",
        })
    }
}

impl std::str::FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bayes" => Ok(Target::Bayes),
            "pro" => Ok(Target::PrO),
            _ => Err(Error::input(format!("unknown target '{s}' (expected bayes or pro)"))),
        }
    }
}

/// `N` particles in `ℝ^d` at iteration `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub particles: Array2<f64>,
    pub iteration: usize,
}

impl ParticleEnsemble {
    pub fn new(particles: Array2<f64>) -> Result<Self> {
        if particles.nrows() == 0 || particles.ncols() == 0 {
            return Err(Error::input("ensemble needs at least one particle of positive dimension"));
        }
        if !particles.iter().all(|v| v.is_finite()) {
            return Err(Error::input("ensemble contains non-finite values"));
        }
        Ok(ParticleEnsemble { particles: particles.as_standard_layout().into_owned(), iteration: 0 })
    }

    pub fn len(&self) -> usize {
        self.particles.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.particles.ncols()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.particles.mean_axis(Axis(0)).expect("non-empty ensemble").to_vec()
    }

    fn row(&self, j: usize) -> &[f64] {
        self.particles.row(j).to_slice().expect("standard layout")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VgdConfig {
    pub target: Target,
    /// Number of particles `N`.
    pub particles: usize,
    /// Number of iterations `T`.
    pub iterations: usize,
    /// Step size `ε`.
    pub step_size: f64,
    pub kernel: KernelSpec,
    pub prior: Prior,
    /// Distribution of the initial particles; the prior when absent.
    #[serde(default)]
    pub init: Option<Prior>,
    pub seed: u64,
    /// Record KGD every this many iterations; 0 disables the trace.
    pub kgd_every: usize,
}

impl VgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::input("N must be at least 1"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::input(format!("step size must be positive, got {}", self.step_size)));
        }
        self.kernel.validate()?;
        self.prior.validate()?;
        if let Some(init) = &self.init {
            init.validate()?;
            check_dim(self.prior.dim, init.dim)?;
        }
        Ok(())
    }

    pub fn with_target(&self, target: Target) -> Self {
        VgdConfig { target, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        VgdConfig { seed, ..self.clone() }
    }

    /// The seeded prior sample every run starts from.
    pub fn initial_ensemble(&self) -> Result<ParticleEnsemble> {
        self.validate()?;
        let init = self.init.unwrap_or(self.prior);
        let mut rng = seed::rng(derive_seed(self.seed, stream::INIT, 0));
        ParticleEnsemble::new(init.sample(&mut rng, self.particles))
    }
}

/// `w_{j,i} = p_{θ_j}(yᵢ|xᵢ) / ((1/N) Σ_r p_{θ_r}(yᵢ|xᵢ))` as an `N × n` matrix.
pub fn pro_weights(ensemble: &ParticleEnsemble, model: &RegressionModel, data: &Dataset) -> Result<Array2<f64>> {
    let loglik = log_likelihood_matrix(ensemble.particles.view(), model, data)?;
    weights_from_loglik(loglik)
}

fn log_likelihood_matrix(particles: ArrayView2<f64>, model: &RegressionModel, data: &Dataset) -> Result<Array2<f64>> {
    let (n_part, n) = (particles.nrows(), data.len());
    let rows: Vec<Vec<f64>> = (0..n_part)
        .into_par_iter()
        .map(|j| {
            let mut out = vec![0.0; n];
            model.log_likelihoods(particles.row(j).to_slice().expect("standard layout"), data, &mut out)?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(Array2::from_shape_vec((n_part, n), rows.concat()).expect("N x n"))
}

/// Column-wise max-shifted normalization of log-likelihoods into PrO weights.
fn weights_from_loglik(mut loglik: Array2<f64>) -> Result<Array2<f64>> {
    let n_part = loglik.nrows() as f64;
    for (i, mut col) in loglik.axis_iter_mut(Axis(1)).enumerate() {
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::LikelihoodUnderflow { datum: i });
        }
        col.mapv_inplace(|l| (l - max).exp());
        let total: f64 = col.sum();
        col.mapv_inplace(|e| n_part * e / total);
    }
    Ok(loglik)
}

/// `s_t(θ_j)` for every particle as an `N × d` matrix.
pub fn scores(ensemble: &ParticleEnsemble, model: &RegressionModel, data: &Dataset, prior: &Prior, target: Target) -> Result<Array2<f64>> {
    check_inputs(ensemble, model, data, prior)?;
    scores_unchecked(ensemble, model, data, prior, target)
}

fn scores_unchecked(ensemble: &ParticleEnsemble, model: &RegressionModel, data: &Dataset, prior: &Prior, target: Target) -> Result<Array2<f64>> {
    let (n_part, d) = (ensemble.len(), ensemble.dim());
    if target == Target::PrO {
        if let Some(s) = pro_scores_closed_form(ensemble, model, data, prior)? {
            return Ok(s);
        }
    }
    let weights = match target {
        Target::Bayes => None,
        Target::PrO => Some(pro_weights(ensemble, model, data)?),
    };
    let rows: Vec<Vec<f64>> = (0..n_part)
        .into_par_iter()
        .map(|j| {
            let theta = ensemble.row(j);
            let mut s = vec![0.0; d];
            let w = weights.as_ref().map(|w| w.row(j).to_slice().expect("standard layout"));
            model.weighted_score(theta, data, w, &mut s)?;
            prior.add_score(theta, &mut s);
            Ok(s)
        })
        .collect::<Result<_>>()?;
    Ok(Array2::from_shape_vec((n_part, d), rows.concat()).expect("N x d"))
}

/// PrO scores evaluating `f_θ` once per particle and datum; `None` when the
/// model has no closed form.
fn pro_scores_closed_form(ensemble: &ParticleEnsemble, model: &RegressionModel, data: &Dataset, prior: &Prior) -> Result<Option<Array2<f64>>> {
    let (n_part, n, d) = (ensemble.len(), data.len(), ensemble.dim());
    // per particle: log densities (overwritten by weights), residuals, gradients
    let mut loglik = vec![0.0; n_part * n];
    let mut resid = vec![0.0; n_part * n];
    let mut grads = vec![0.0; n_part * n * d];
    for (j, ((l, r), g)) in loglik.chunks_mut(n).zip(resid.chunks_mut(n)).zip(grads.chunks_mut(n * d)).enumerate() {
        if !model.score_terms_into(ensemble.row(j), data, l, r, g) {
            return Ok(None);
        }
    }
    let mut max = vec![f64::NEG_INFINITY; n];
    for l in loglik.chunks(n) {
        max.iter_mut().zip(l).for_each(|(m, &v)| *m = m.max(v));
    }
    if let Some(i) = max.iter().position(|m| !m.is_finite()) {
        return Err(Error::LikelihoodUnderflow { datum: i });
    }
    let mut total = vec![0.0; n];
    for l in loglik.chunks_mut(n) {
        for ((v, m), t) in l.iter_mut().zip(&max).zip(total.iter_mut()) {
            *v = (*v - m).exp();
            *t += *v;
        }
    }
    let scale = n_part as f64;
    for l in loglik.chunks_mut(n) {
        l.iter_mut().zip(&total).for_each(|(v, t)| *v = scale * *v / t);
    }
    let mut out = Array2::zeros((n_part, d));
    for (j, mut s) in out.rows_mut().into_iter().enumerate() {
        let s = s.as_slice_mut().expect("standard layout");
        weighted_terms(&resid[j * n..(j + 1) * n], &grads[j * n * d..(j + 1) * n * d], &loglik[j * n..(j + 1) * n], s);
        prior.add_score(ensemble.row(j), s);
    }
    Ok(Some(out))
}

fn check_inputs(ensemble: &ParticleEnsemble, model: &RegressionModel, data: &Dataset, prior: &Prior) -> Result<()> {
    check_dim(model.param_dim(), ensemble.dim())?;
    check_dim(prior.dim, ensemble.dim())?;
    check_dim(model.covariate_dim(), data.x.ncols())?;
    check_dim(model.response_dim(), data.y.ncols())
}

/// The VGD drift for every particle, `N × d`.
pub fn drift(
    ensemble: &ParticleEnsemble,
    model: &RegressionModel,
    data: &Dataset,
    prior: &Prior,
    kernel: &KernelSpec,
    target: Target,
) -> Result<Array2<f64>> {
    let k = kernel.resolve_for(ensemble.particles.view())?;
    let s = scores(ensemble, model, data, prior, target)?;
    Ok(drift_from_scores(ensemble, &s, &k))
}

fn drift_from_scores(ensemble: &ParticleEnsemble, scores: &Array2<f64>, kernel: &KernelSpec) -> Array2<f64> {
    let (n_part, d) = (ensemble.len(), ensemble.dim());
    let inv_n = 1.0 / n_part as f64;
    let rows: Vec<Vec<f64>> = (0..n_part)
        .into_par_iter()
        .map(|i| {
            let xi = ensemble.row(i);
            let mut acc = vec![0.0; d];
            for r in 0..n_part {
                let xr = ensemble.row(r);
                let sr = scores.row(r);
                let t = kernel.radial_terms(crate::kernels::sq_dist(xr, xi), d);
                for ((a, (&p, &q)), &s) in acc.iter_mut().zip(xr.iter().zip(xi)).zip(sr.iter()) {
                    *a += t.grad_coef * (p - q) + t.value * s;
                }
            }
            acc.iter_mut().for_each(|a| *a *= inv_n);
            acc
        })
        .collect();
    Array2::from_shape_vec((n_part, d), rows.concat()).expect("N x d")
}

/// `θ ← θ + ε·drift`; fails without modifying anything if a coordinate becomes non-finite.
pub fn step(ensemble: &ParticleEnsemble, drift: &Array2<f64>, step_size: f64) -> Result<ParticleEnsemble> {
    if ensemble.particles.dim() != drift.dim() {
        return Err(Error::input(format!("drift shape {:?} does not match ensemble {:?}", drift.dim(), ensemble.particles.dim())));
    }
    let mut particles = ensemble.particles.clone();
    particles.scaled_add(step_size, drift);
    if !particles.iter().all(|v| v.is_finite()) {
        return Err(Error::Divergence { iteration: ensemble.iteration + 1 });
    }
    Ok(ParticleEnsemble { particles, iteration: ensemble.iteration + 1 })
}

/// Kernel gradient discrepancy of the ensemble for the given target.
pub fn kgd(
    ensemble: &ParticleEnsemble,
    model: &RegressionModel,
    data: &Dataset,
    prior: &Prior,
    kernel: &KernelSpec,
    target: Target,
) -> Result<f64> {
    let k = kernel.resolve_for(ensemble.particles.view())?;
    let s = scores(ensemble, model, data, prior, target)?;
    Ok(kgd_from_scores(ensemble, &s, &k))
}

/// `sqrt(max(0, (1/N²) Σᵢ Σⱼ k_Q(θᵢ, θⱼ)))` with
/// `k_Q(θ, ϑ) = ∇₁·∇₂k + ∇₁k·b(ϑ) + ∇₂k·b(θ) + k b(θ)·b(ϑ)`.
fn kgd_from_scores(ensemble: &ParticleEnsemble, scores: &Array2<f64>, kernel: &KernelSpec) -> f64 {
    let (n_part, d) = (ensemble.len(), ensemble.dim());
    let row_sums: Vec<f64> = (0..n_part)
        .into_par_iter()
        .map(|i| {
            let (xi, bi) = (ensemble.row(i), scores.row(i));
            let mut acc = 0.0;
            for j in 0..n_part {
                let (xj, bj) = (ensemble.row(j), scores.row(j));
                let t = kernel.radial_terms(crate::kernels::sq_dist(xi, xj), d);
                let mut cross = 0.0;
                let mut dot = 0.0;
                for c in 0..d {
                    // ∇₁k(θᵢ,θⱼ)·b(θⱼ) + ∇₂k(θᵢ,θⱼ)·b(θᵢ) with ∇₂k = −∇₁k
                    cross += t.grad_coef * (xi[c] - xj[c]) * (bj[c] - bi[c]);
                    dot += bi[c] * bj[c];
                }
                acc += t.div12 + cross + t.value * dot;
            }
            acc
        })
        .collect();
    let total: f64 = row_sums.iter().sum();
    (total / (n_part * n_part) as f64).max(0.0).sqrt()
}

/// Result of a VGD run; `failure` is set when the run stopped early, in which
/// case `ensemble` is the last finite ensemble and `trace` the partial trace.
#[derive(Debug)]
pub struct VgdOutput {
    pub ensemble: ParticleEnsemble,
    pub trace: KgdTrace,
    pub failure: Option<Error>,
}

impl VgdOutput {
    pub fn into_result(self) -> Result<(ParticleEnsemble, KgdTrace)> {
        match self.failure {
            None => Ok((self.ensemble, self.trace)),
            Some(e) => Err(e),
        }
    }
}

/// Runs `T` iterations from the seeded initial ensemble.
pub fn run(config: &VgdConfig, model: &RegressionModel, data: &Dataset) -> Result<(ParticleEnsemble, KgdTrace)> {
    run_detailed(config, model, data)?.into_result()
}

/// As [`run`], but keeps the partial output when the dynamics break down.
/// Only invalid configurations or inputs are returned as `Err`.
pub fn run_detailed(config: &VgdConfig, model: &RegressionModel, data: &Dataset) -> Result<VgdOutput> {
    let init = config.initial_ensemble()?;
    run_from(config, model, data, init)
}

/// Runs `T` iterations starting from `initial` (the config's seed is not used).
pub fn run_from(config: &VgdConfig, model: &RegressionModel, data: &Dataset, initial: ParticleEnsemble) -> Result<VgdOutput> {
    config.validate()?;
    check_dim(config.particles, initial.len())?;
    check_inputs(&initial, model, data, &config.prior)?;
    let mut ensemble = initial;
    let mut trace = KgdTrace::default();
    let start = ensemble.iteration;
    let end = start + config.iterations;
    let fail = |ensemble, trace, e| Ok(VgdOutput { ensemble, trace, failure: Some(e) });
    loop {
        let t = ensemble.iteration;
        let record = config.kgd_every > 0 && (t - start) % config.kgd_every == 0;
        if t == end && !record {
            break;
        }
        let kernel = config.kernel.resolve_for(ensemble.particles.view())?;
        let s = match scores_unchecked(&ensemble, model, data, &config.prior, config.target) {
            Ok(s) => s,
            Err(e) => return fail(ensemble, trace, e),
        };
        if record {
            trace.points.push(KgdPoint { iteration: t, kgd: kgd_from_scores(&ensemble, &s, &kernel) });
        }
        if t == end {
            break;
        }
        let d = drift_from_scores(&ensemble, &s, &kernel);
        match step(&ensemble, &d, config.step_size) {
            Ok(next) => ensemble = next,
            Err(e) => return fail(ensemble, trace, e),
        }
    }
    Ok(VgdOutput { ensemble, trace, failure: None })
}
