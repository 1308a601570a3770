//! Misspecification diagnostic comparing the Bayes and PrO posterior predictives.
//!
//! For isotropic Gaussian noise the expected Gaussian response kernel
//! between two predictives has the closed form
//!
//! ```text
//! κ(θ, ϑ | x) = (ℓ² / (ℓ² + 2σ²))^{p/2} exp(−‖f_θ(x) − f_ϑ(x)‖² / (2(ℓ² + 2σ²)))
//! ```
//!
//! so the squared MMD between two particle mixtures is a double sum of `κ`.
//! The statistic `D` averages it over the observed covariates and is compared
//! against values recomputed on data simulated from the Bayes posterior mean.

mod bands;
mod report;

pub use bands::{predictive_bands, write_bands_csv, BandRow};
pub use report::{DiagnosticReport, ReportSeeds};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::{Dataset, Provenance, RegressionModel};
use crate::seed::{self, derive_seed, stream};
use crate::vgd::{self, KgdTrace, ParticleEnsemble, Target, VgdConfig};

pub const DEFAULT_REPLICATES: usize = 100;
pub const DEFAULT_MAX_FAILED_FRACTION: f64 = 0.05;

fn isotropic_sd(model: &RegressionModel) -> Result<f64> {
    model
        .isotropic_sd()
        .ok_or_else(|| Error::Unsupported("the closed-form predictive MMD needs isotropic Gaussian noise".into()))
}

fn check_lengthscale(ell: f64) -> Result<()> {
    if ell > 0.0 && ell.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!("MMD lengthscale must be positive and finite, got {ell}")))
    }
}

/// Pre-computed constants of `κ` for one `(σ, ℓ, p)`.
#[derive(Debug, Clone, Copy)]
struct Kappa {
    scale: f64,
    inv_two_var: f64,
}

impl Kappa {
    fn new(sd: f64, ell: f64, p: usize) -> Self {
        let l2 = ell * ell;
        let v = l2 + 2.0 * sd * sd;
        Kappa { scale: (l2 / v).powf(0.5 * p as f64), inv_two_var: 0.5 / v }
    }

    #[inline]
    fn eval(&self, gap: f64) -> f64 {
        self.scale * (-gap * gap * self.inv_two_var).exp()
    }

    /// `(1/N²) ΣΣ κ(a_r, b_s)` over scalar predictions.
    fn mean_cross(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut total = 0.0;
        for &u in a {
            for &v in b {
                total += self.eval(u - v);
            }
        }
        total / (a.len() * b.len()) as f64
    }

    /// V-statistic MMD², clamped at zero.
    fn mmd2(&self, a: &[f64], b: &[f64]) -> f64 {
        (self.mean_cross(a, a) - 2.0 * self.mean_cross(a, b) + self.mean_cross(b, b)).max(0.0)
    }
}

/// Expected Gaussian response kernel between `P_θ(·|x)` and `P_ϑ(·|x)`.
pub fn kappa(theta: &[f64], vartheta: &[f64], x: &[f64], model: &RegressionModel, lengthscale: f64) -> Result<f64> {
    let sd = isotropic_sd(model)?;
    check_lengthscale(lengthscale)?;
    let gap = model.predict_point(theta, x)? - model.predict_point(vartheta, x)?;
    Ok(Kappa::new(sd, lengthscale, model.response_dim()).eval(gap))
}

fn point_predictions(ensemble: &ParticleEnsemble, model: &RegressionModel, x: &[f64]) -> Result<Vec<f64>> {
    ensemble.particles.rows().into_iter().map(|t| model.predict_point(t.to_slice().expect("standard layout"), x)).collect()
}

/// MMD² between the Bayes and PrO predictive mixtures at one covariate.
pub fn mmd2_predictive(
    bayes: &ParticleEnsemble,
    pro: &ParticleEnsemble,
    x: &[f64],
    model: &RegressionModel,
    lengthscale: f64,
) -> Result<f64> {
    let sd = isotropic_sd(model)?;
    check_lengthscale(lengthscale)?;
    check_dim(bayes.dim(), pro.dim())?;
    let fb = point_predictions(bayes, model, x)?;
    let fp = point_predictions(pro, model, x)?;
    Ok(Kappa::new(sd, lengthscale, model.response_dim()).mmd2(&fb, &fp))
}

/// `N × n` predictions, row per particle.
fn prediction_rows(ensemble: &ParticleEnsemble, model: &RegressionModel, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    ensemble.particles.rows().into_iter().map(|t| model.predict(t.to_slice().expect("standard layout"), data)).collect()
}

/// `D = (1/n) Σᵢ MMD²(P_PrO(·|xᵢ), P_Bayes(·|xᵢ))` with ℓ the sd of the observed responses.
pub fn statistic_d(bayes: &ParticleEnsemble, pro: &ParticleEnsemble, data: &Dataset, model: &RegressionModel) -> Result<f64> {
    statistic_d_with_lengthscale(bayes, pro, data, model, mmd_lengthscale(data)?)
}

/// The MMD response-kernel lengthscale: sample sd of the observed responses.
pub fn mmd_lengthscale(data: &Dataset) -> Result<f64> {
    if data.len() < 2 {
        return Err(Error::input("the MMD lengthscale needs at least two responses"));
    }
    let ell = data.response_sd();
    check_lengthscale(ell)?;
    Ok(ell)
}

pub fn statistic_d_with_lengthscale(
    bayes: &ParticleEnsemble,
    pro: &ParticleEnsemble,
    data: &Dataset,
    model: &RegressionModel,
    lengthscale: f64,
) -> Result<f64> {
    let sd = isotropic_sd(model)?;
    check_lengthscale(lengthscale)?;
    check_dim(bayes.dim(), pro.dim())?;
    if data.is_empty() {
        return Err(Error::input("statistic D needs at least one covariate"));
    }
    let kappa = Kappa::new(sd, lengthscale, model.response_dim());
    let fb = prediction_rows(bayes, model, data)?;
    let fp = prediction_rows(pro, model, data)?;
    let per_datum: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let a: Vec<f64> = fb.iter().map(|r| r[i]).collect();
            let b: Vec<f64> = fp.iter().map(|r| r[i]).collect();
            kappa.mmd2(&a, &b)
        })
        .collect();
    Ok(per_datum.iter().sum::<f64>() / data.len() as f64)
}

/// Settings of a full diagnosis. The seeds inside `bayes` and `pro` are
/// replaced by sub-seeds of `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticConfig {
    pub bayes: VgdConfig,
    pub pro: VgdConfig,
    /// Number of null replicates `M`.
    pub replicates: usize,
    pub seed: u64,
    /// Start null fits from the observed-data ensembles instead of `μ₀`.
    #[serde(default)]
    pub warm_start: bool,
    #[serde(default = "default_max_failed")]
    pub max_failed_fraction: f64,
}

fn default_max_failed() -> f64 {
    DEFAULT_MAX_FAILED_FRACTION
}

impl DiagnosticConfig {
    /// Same VGD settings for both targets.
    pub fn new(base: &VgdConfig, replicates: usize, seed: u64) -> Self {
        DiagnosticConfig {
            bayes: base.with_target(Target::Bayes),
            pro: base.with_target(Target::PrO),
            replicates,
            seed,
            warm_start: false,
            max_failed_fraction: DEFAULT_MAX_FAILED_FRACTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::input("M must be at least 1"));
        }
        if self.bayes.target != Target::Bayes || self.pro.target != Target::PrO {
            return Err(Error::input("diagnostic configs must target bayes and pro respectively"));
        }
        if !(0.0..=1.0).contains(&self.max_failed_fraction) {
            return Err(Error::input("max_failed_fraction must lie in [0, 1]"));
        }
        self.bayes.validate()?;
        self.pro.validate()
    }

    pub fn seeds(&self) -> ReportSeeds {
        ReportSeeds {
            master: self.seed,
            observed_init: derive_seed(self.seed, stream::INIT, 0),
            null_data_stream: stream::NULL_DATA,
            null_init_stream: stream::NULL_INIT,
        }
    }
}

/// Fits both targets from a shared initial ensemble.
fn fit_pair(
    config: &DiagnosticConfig,
    model: &RegressionModel,
    data: &Dataset,
    init_seed: u64,
    warm: Option<(&ParticleEnsemble, &ParticleEnsemble)>,
) -> Result<(FitOutput, FitOutput)> {
    let bayes_cfg = config.bayes.with_seed(init_seed);
    let pro_cfg = config.pro.with_seed(init_seed);
    let (b, p) = match warm {
        Some((wb, wp)) => (
            vgd::run_from(&bayes_cfg, model, data, reset(wb))?,
            vgd::run_from(&pro_cfg, model, data, reset(wp))?,
        ),
        None => (vgd::run_detailed(&bayes_cfg, model, data)?, vgd::run_detailed(&pro_cfg, model, data)?),
    };
    let (be, bt) = b.into_result()?;
    let (pe, pt) = p.into_result()?;
    Ok((FitOutput { ensemble: be, trace: bt }, FitOutput { ensemble: pe, trace: pt }))
}

fn reset(e: &ParticleEnsemble) -> ParticleEnsemble {
    ParticleEnsemble { particles: e.particles.clone(), iteration: 0 }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub ensemble: ParticleEnsemble,
    pub trace: KgdTrace,
}

/// Outcome of each null replicate: `Ok(D)` or the reason it failed.
#[derive(Debug)]
pub struct NullDistribution {
    pub outcomes: Vec<std::result::Result<f64, Error>>,
}

impl NullDistribution {
    pub fn samples(&self) -> Vec<f64> {
        self.outcomes.iter().filter_map(|o| o.as_ref().ok().copied()).collect()
    }

    pub fn failed(&self) -> Vec<usize> {
        self.outcomes.iter().enumerate().filter(|(_, o)| o.is_err()).map(|(m, _)| m).collect()
    }
}

/// Recomputes `D` on `M` datasets simulated from `θ̂` at the observed covariates.
///
/// Replicate `m` draws its responses from sub-seed `(seed, NULL_DATA, m)` and
/// initializes both fits from sub-seed `(seed, NULL_INIT, m)`.
pub fn null_distribution(
    data: &Dataset,
    model: &RegressionModel,
    theta_hat: &[f64],
    lengthscale: f64,
    config: &DiagnosticConfig,
    warm: Option<(&ParticleEnsemble, &ParticleEnsemble)>,
) -> Result<NullDistribution> {
    config.validate()?;
    isotropic_sd(model)?;
    check_lengthscale(lengthscale)?;
    let outcomes: Vec<std::result::Result<f64, Error>> = (0..config.replicates)
        .into_par_iter()
        .map(|m| -> std::result::Result<f64, Error> {
            let mut rng = seed::rng(derive_seed(config.seed, stream::NULL_DATA, m as u64));
            let y = model.simulate(theta_hat, data, &mut rng)?;
            let synthetic = data.with_responses(y, Provenance::WellSpecified, config.seed)?;
            let init_seed = derive_seed(config.seed, stream::NULL_INIT, m as u64);
            let (b, p) = fit_pair(config, model, &synthetic, init_seed, warm)?;
            let d = statistic_d_with_lengthscale(&b.ensemble, &p.ensemble, &synthetic, model, lengthscale)?;
            if d.is_finite() {
                Ok(d)
            } else {
                Err(Error::Numerical(format!("non-finite D in null replicate {m}")))
            }
        })
        .collect();
    let null = NullDistribution { outcomes };
    let failed = null.failed().len();
    if failed as f64 > config.max_failed_fraction * config.replicates as f64 {
        let first = null.outcomes.iter().find_map(|o| o.as_ref().err()).map(|e| e.to_string()).unwrap_or_default();
        return Err(Error::Numerical(format!(
            "{failed} of {} null replicates failed (first: {first})",
            config.replicates
        )));
    }
    Ok(null)
}

/// Everything produced by [`diagnose`].
#[derive(Debug, Clone)]
pub struct Diagnosis {
    pub report: DiagnosticReport,
    pub bayes: FitOutput,
    pub pro: FitOutput,
}

/// Fits both targets on the observed data, computes `D`, and calibrates it
/// against the simulated null.
pub fn diagnose(data: &Dataset, model: &RegressionModel, config: &DiagnosticConfig) -> Result<Diagnosis> {
    config.validate()?;
    isotropic_sd(model)?;
    let lengthscale = mmd_lengthscale(data)?;
    let seeds = config.seeds();
    let (bayes, pro) = fit_pair(config, model, data, seeds.observed_init, None)?;
    let d_actual = statistic_d_with_lengthscale(&bayes.ensemble, &pro.ensemble, data, model, lengthscale)?;
    let theta_hat = bayes.ensemble.mean();
    let warm = config.warm_start.then_some((&bayes.ensemble, &pro.ensemble));
    let null = null_distribution(data, model, &theta_hat, lengthscale, config, warm)?;
    let report = DiagnosticReport::new(d_actual, &null, theta_hat, lengthscale, config.replicates, seeds);
    Ok(Diagnosis { report, bayes, pro })
}
