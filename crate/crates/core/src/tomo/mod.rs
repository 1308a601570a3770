//! 2-D travel-time tomography: fast-marching forward model, sensitivities,
//! the box reparametrisation and the sensor test bed.

mod fmm;
mod grid;
mod inversion;
mod ray;
mod reparam;
mod scenario;

pub use fmm::{fast_marching, solve_all, travel_time_gradient, TravelTimeField, SOURCE_RADIUS};
pub use grid::{distance, Geometry, Point, VelocityGrid};
pub use inversion::{read_grid_csv, run_tomography, write_grid_csv, TomoPreset, TomoResult, TomoSummary, VelocityMaps, DESK_EPSILON};
pub use ray::{ray_path_lengths, ray_sensitivity};
pub use reparam::BoxReparam;
pub use scenario::{
    channel_count, convex_hull, hull_mask, inside_hull, make_scenario, ring_layout, NoiseRule, Perturbation, ScenarioFile,
    ScenarioKind, SensorScenario, DEFAULT_PERTURBATION, DEFAULT_RING_RADIUS, DEFAULT_SENSORS, SCENARIO_VERSION,
};

use ndarray::Array2;

use crate::error::{Error, Result};

/// Ordered `(source, receiver)` pairs, source-major.
pub fn channel_pairs(sensors: usize, include_self_pairs: bool) -> Vec<(usize, usize)> {
    (0..sensors)
        .flat_map(|s| (0..sensors).map(move |r| (s, r)))
        .filter(|(s, r)| include_self_pairs || s != r)
        .collect()
}

/// Travel time for every channel of [`channel_pairs`]; self-pairs are exactly zero.
pub fn travel_times(grid: &VelocityGrid, sensors: &[Point], include_self_pairs: bool) -> Result<Vec<f64>> {
    let geom = grid.geometry();
    if let Some(p) = sensors.iter().find(|&&p| !geom.contains(p)) {
        return Err(Error::input(format!("sensor {p:?} lies outside the domain")));
    }
    let fields = solve_all(grid, sensors)?;
    channel_pairs(sensors.len(), include_self_pairs)
        .into_iter()
        .map(|(s, r)| if s == r { Ok(0.0) } else { fields[s].time_at(sensors[r]) })
        .collect()
}

/// Travel times as a regression function of the unconstrained node
/// parameters `u`, with velocities `v = lo + (hi − lo)·s(u)`.
#[derive(Debug, Clone)]
pub struct TravelTimeModel {
    pub geometry: Geometry,
    pub sensors: Vec<Point>,
    pub reparam: BoxReparam,
    pub channels: Vec<(usize, usize)>,
}

impl TravelTimeModel {
    pub fn new(geometry: Geometry, sensors: Vec<Point>, reparam: BoxReparam, include_self_pairs: bool) -> Result<Self> {
        if sensors.len() < 2 {
            return Err(Error::input("need at least two sensors"));
        }
        if let Some(p) = sensors.iter().find(|&&p| !geometry.contains(p)) {
            return Err(Error::input(format!("sensor {p:?} lies outside the domain")));
        }
        let channels = channel_pairs(sensors.len(), include_self_pairs);
        Ok(TravelTimeModel { geometry, sensors, reparam, channels })
    }

    pub fn param_dim(&self) -> usize {
        self.geometry.g * self.geometry.g
    }

    pub fn velocity_grid(&self, u: &[f64]) -> Result<VelocityGrid> {
        let g = self.geometry.g;
        let v = Array2::from_shape_vec((g, g), self.reparam.forward_all(u)).map_err(|e| Error::input(e.to_string()))?;
        VelocityGrid::new(v, self.geometry.half_width)
    }

    fn channel(&self, c: usize) -> Result<(usize, usize)> {
        self.channels.get(c).copied().ok_or_else(|| Error::input(format!("unknown channel {c}")))
    }

    pub fn predict_channel(&self, u: &[f64], c: usize) -> Result<f64> {
        self.predict_channels(u, &[c]).map(|v| v[0])
    }

    /// Predictions for the listed channel ids; each needed source is solved once.
    pub fn predict_channels(&self, u: &[f64], channels: &[usize]) -> Result<Vec<f64>> {
        let grid = self.velocity_grid(u)?;
        let fields = self.fields_for(&grid, channels)?;
        channels
            .iter()
            .map(|&c| {
                let (s, r) = self.channel(c)?;
                if s == r {
                    Ok(0.0)
                } else {
                    fields[s].as_ref().expect("solved").time_at(self.sensors[r])
                }
            })
            .collect()
    }

    /// `Σᵢ cotangentᵢ ∇_u f(channelᵢ)`.
    pub fn score(&self, u: &[f64], channels: &[usize], cotangent: &[f64]) -> Result<Vec<f64>> {
        if channels.len() != cotangent.len() {
            return Err(Error::DimensionMismatch { expected: channels.len(), got: cotangent.len() });
        }
        let grid = self.velocity_grid(u)?;
        let fields = self.fields_for(&grid, channels)?;
        let mut seeds: Vec<Vec<(Point, f64)>> = vec![Vec::new(); self.sensors.len()];
        for (&c, &w) in channels.iter().zip(cotangent) {
            let (s, r) = self.channel(c)?;
            if s != r && w != 0.0 {
                seeds[s].push((self.sensors[r], w));
            }
        }
        let mut grad_s = vec![0.0; self.param_dim()];
        for (field, seeds) in fields.iter().zip(&seeds) {
            if let (Some(f), false) = (field, seeds.is_empty()) {
                f.accumulate_slowness_gradient(seeds, &mut grad_s)?;
            }
        }
        // ∂/∂u = (dv/du)·(−1/v²)·∂/∂s
        Ok(u
            .iter()
            .zip(grid.values.iter())
            .zip(&grad_s)
            .map(|((&ui, &v), &gs)| -gs / (v * v) * self.reparam.jacobian(ui))
            .collect())
    }

    fn fields_for(&self, grid: &VelocityGrid, channels: &[usize]) -> Result<Vec<Option<TravelTimeField>>> {
        let mut needed = vec![false; self.sensors.len()];
        for &c in channels {
            let (s, r) = self.channel(c)?;
            if s != r {
                needed[s] = true;
            }
        }
        needed
            .iter()
            .zip(&self.sensors)
            .map(|(&need, &p)| if need { fast_marching(grid, p).map(Some) } else { Ok(None) })
            .collect()
    }
}
