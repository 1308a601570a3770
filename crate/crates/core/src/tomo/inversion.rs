//! Bayes and PrO inversions of a sensor scenario and their velocity maps.

use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{BandwidthPolicy, KernelSpec};
use crate::seed::{derive_seed, stream};
use crate::tomo::scenario::{hull_mask, ScenarioFile, SensorScenario};
use crate::tomo::BoxReparam;
use crate::vgd::{self, KgdTrace, ParticleEnsemble, Target, VgdConfig};

/// VGD settings for a tomography run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomoPreset {
    pub name: String,
    /// Grid size used when the canonical scenario is generated.
    #[serde(rename = "G")]
    pub grid_size: usize,
    #[serde(rename = "N")]
    pub particles: usize,
    #[serde(rename = "T")]
    pub iterations: usize,
    pub epsilon: f64,
    pub kgd_every: usize,
}

impl TomoPreset {
    pub fn desk() -> Self {
        TomoPreset { name: "desk".into(), grid_size: 11, particles: 100, iterations: 200, epsilon: DESK_EPSILON, kgd_every: 10 }
    }

    pub fn paper() -> Self {
        TomoPreset { name: "paper".into(), grid_size: 21, particles: 600, iterations: 500, epsilon: 0.1, kgd_every: 10 }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            _ => Err(Error::input(format!("unknown tomography preset '{name}' (expected desk or paper)"))),
        }
    }

    /// Gaussian kernel with the `√(2 ln N)`-scaled median bandwidth and the
    /// scenario's box prior. With the plain median every pair of particles in
    /// d = G² dimensions has kernel value near `e^{-1/2}`, the drift averages
    /// the scores of the whole ensemble and Euler steps above ~1e-3 diverge.
    pub fn vgd_config(&self, scenario: &SensorScenario, target: Target, seed: u64) -> VgdConfig {
        VgdConfig {
            target,
            particles: self.particles,
            iterations: self.iterations,
            step_size: self.epsilon,
            kernel: KernelSpec::gaussian(1.0).with_bandwidth(BandwidthPolicy::MedianLogN),
            prior: scenario.prior,
            init: None,
            seed: derive_seed(seed, stream::INIT, 0),
            kgd_every: self.kgd_every,
        }
    }
}

/// Largest step that stays stable on the desk grid with `N = 100`.
pub const DESK_EPSILON: f64 = 0.02;

/// Pointwise posterior mean and sd of the velocity (km/s), `G × G`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityMaps {
    pub mean: Array2<f64>,
    pub sd: Array2<f64>,
}

impl VelocityMaps {
    pub fn from_ensemble(ensemble: &ParticleEnsemble, reparam: &BoxReparam, g: usize) -> Result<Self> {
        if ensemble.dim() != g * g {
            return Err(Error::DimensionMismatch { expected: g * g, got: ensemble.dim() });
        }
        let v = ensemble.particles.mapv(|u| reparam.forward(u));
        let mean = v.mean_axis(Axis(0)).expect("non-empty");
        let ddof = if ensemble.len() > 1 { 1.0 } else { 0.0 };
        let sd = v.std_axis(Axis(0), ddof);
        Ok(VelocityMaps {
            mean: mean.into_shape_with_order((g, g)).expect("G x G"),
            sd: sd.into_shape_with_order((g, g)).expect("G x G"),
        })
    }
}

/// Row-major `G × G` grid without a header.
pub fn write_grid_csv(grid: &Array2<f64>, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in grid.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid_csv(path: &Path) -> Result<Array2<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        for f in rec.iter() {
            values.push(f.parse::<f64>().map_err(|e| Error::input(format!("bad grid value '{f}': {e}")))?);
        }
        rows += 1;
    }
    let cols = if rows == 0 { 0 } else { values.len() / rows };
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::input(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomoSummary {
    pub preset: TomoPreset,
    pub seed: u64,
    /// Nodes inside the convex hull of the assumed sensors.
    pub hull_nodes: usize,
    /// Mean over hull nodes of `|mean_Bayes − mean_PrO|` (km/s).
    pub mean_abs_mean_diff: f64,
    /// Mean over hull nodes of `|sd_Bayes − sd_PrO|` (km/s).
    pub mean_abs_sd_diff: f64,
    /// Mean over hull nodes of `|mean − truth|` per target.
    pub bayes_mean_abs_error: f64,
    pub pro_mean_abs_error: f64,
    pub final_kgd_bayes: Option<f64>,
    pub final_kgd_pro: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TomoResult {
    pub scenario: SensorScenario,
    pub bayes: ParticleEnsemble,
    pub pro: ParticleEnsemble,
    pub bayes_trace: KgdTrace,
    pub pro_trace: KgdTrace,
    pub bayes_maps: VelocityMaps,
    pub pro_maps: VelocityMaps,
    pub summary: TomoSummary,
}

/// Builds the scenario, fits both targets from a shared prior sample, and
/// summarizes the maps over the sensors' convex hull.
pub fn run_tomography(file: &ScenarioFile, preset: &TomoPreset, seed: u64) -> Result<TomoResult> {
    let scenario = file.build()?;
    let g = file.grid_size;
    let reparam = BoxReparam::new(file.prior_box[0], file.prior_box[1])?;
    let fit = |target| vgd::run(&preset.vgd_config(&scenario, target, seed), &scenario.model, &scenario.data);
    let (bayes, bayes_trace) = fit(Target::Bayes)?;
    let (pro, pro_trace) = fit(Target::PrO)?;
    let bayes_maps = VelocityMaps::from_ensemble(&bayes, &reparam, g)?;
    let pro_maps = VelocityMaps::from_ensemble(&pro, &reparam, g)?;
    let mask = hull_mask(&scenario.velocity_true.geometry(), &scenario.sensors_assumed);
    let hull_mean = |a: &Array2<f64>, b: &Array2<f64>| {
        let (sum, count) = a
            .iter()
            .zip(b)
            .zip(&mask)
            .filter(|(_, &inside)| inside)
            .fold((0.0, 0usize), |(s, c), ((x, y), _)| (s + (x - y).abs(), c + 1));
        sum / count.max(1) as f64
    };
    let truth = &scenario.velocity_true.values;
    let summary = TomoSummary {
        preset: preset.clone(),
        seed,
        hull_nodes: mask.iter().filter(|&&m| m).count(),
        mean_abs_mean_diff: hull_mean(&bayes_maps.mean, &pro_maps.mean),
        mean_abs_sd_diff: hull_mean(&bayes_maps.sd, &pro_maps.sd),
        bayes_mean_abs_error: hull_mean(&bayes_maps.mean, truth),
        pro_mean_abs_error: hull_mean(&pro_maps.mean, truth),
        final_kgd_bayes: bayes_trace.last().map(|p| p.kgd),
        final_kgd_pro: pro_trace.last().map(|p| p.kgd),
    };
    Ok(TomoResult { scenario, bayes, pro, bayes_trace, pro_trace, bayes_maps, pro_maps, summary })
}
