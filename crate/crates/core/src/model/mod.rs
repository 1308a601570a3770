//! Gaussian regression models, priors, datasets and the synthetic task catalog.

mod data;
mod prior;
mod regression;
mod tasks;

pub use data::{Dataset, DatasetMeta, Provenance};
pub use prior::{Prior, PriorKind};
pub use regression::{logistic, NoiseModel, RegressionFn, RegressionModel};
pub use tasks::{generate_dataset, Problem, Regime, Task, DEFAULT_SINUSOID_TERMS, SINUSOID_COVARIATE_GAP};

pub(crate) use regression::{channel_id, weighted_terms};

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;

impl RegressionModel {
    /// Draws `ỹᵢ ~ N(f_θ(xᵢ), Σ)` at the given covariates.
    pub fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], covariates: &Dataset, rng: &mut R) -> Result<Array2<f64>> {
        let means = self.predict(theta, covariates)?;
        let mut y = Array2::zeros((covariates.len(), self.response_dim()));
        for (i, (x, m)) in covariates.x.rows().into_iter().zip(means).enumerate() {
            let sd = match &self.noise {
                NoiseModel::Isotropic { sd } => *sd,
                NoiseModel::PerChannel { sd } => sd[channel_id(x.as_slice().expect("row-major"))?],
            };
            let z: f64 = rng.sample(StandardNormal);
            y[[i, 0]] = m + sd * z;
        }
        Ok(y)
    }
}
