//! The synthetic two-region test bed with a ring of sensors.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, NoiseModel, Prior, Provenance, RegressionFn, RegressionModel};
use crate::seed::{self, derive_seed, stream};
use crate::tomo::grid::{Geometry, Point, VelocityGrid};
use crate::tomo::reparam::BoxReparam;
use crate::tomo::{channel_pairs, travel_times, TravelTimeModel};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    WellSpecified,
    MisspecifiedSensors,
}

/// `σ_c = max(relative · |clean_c|, floor)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseRule {
    pub relative: f64,
    pub floor: f64,
}

impl NoiseRule {
    pub fn sd(&self, clean: f64) -> f64 {
        (self.relative * clean.abs()).max(self.floor)
    }
}

impl Default for NoiseRule {
    fn default() -> Self {
        NoiseRule { relative: 0.02, floor: 1e-4 }
    }
}

/// Sensor displacement applied to the assumed positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    /// Offset length (km); the direction of each offset is uniform.
    pub magnitude: f64,
    pub seed: u64,
}

/// Versioned, self-contained description of a tomography test bed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    pub kind: ScenarioKind,
    /// `[x_min, x_max, y_min, y_max]` (km); must be a square centred at the origin.
    pub domain: [f64; 4],
    #[serde(rename = "G")]
    pub grid_size: usize,
    pub sensors_true: Vec<Point>,
    pub sensors_assumed: Vec<Point>,
    pub region_radius: f64,
    pub v_inner: f64,
    pub v_outer: f64,
    pub noise_rule: NoiseRule,
    pub perturbation: Option<Perturbation>,
    pub include_self_pairs: bool,
    /// Uniform prior box for every node velocity (km/s).
    pub prior_box: [f64; 2],
    /// Seed of the observation noise.
    pub noise_seed: u64,
}

/// Sensors placed evenly on a circle.
pub fn ring_layout(count: usize, radius: f64) -> Vec<Point> {
    (0..count)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / count as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

pub const DEFAULT_SENSORS: usize = 16;
pub const DEFAULT_RING_RADIUS: f64 = 4.0;
pub const DEFAULT_PERTURBATION: f64 = 0.5;

impl ScenarioFile {
    /// The canonical test bed: `[−5, 5]²`, a slow disc of radius 2 (1 km/s)
    /// inside a 2 km/s background, 16 sensors on a ring of radius 4 km.
    pub fn canonical(kind: ScenarioKind, grid_size: usize, seed: u64) -> Self {
        let sensors_true = ring_layout(DEFAULT_SENSORS, DEFAULT_RING_RADIUS);
        let (sensors_assumed, perturbation) = match kind {
            ScenarioKind::WellSpecified => (sensors_true.clone(), None),
            ScenarioKind::MisspecifiedSensors => {
                let p = Perturbation { magnitude: DEFAULT_PERTURBATION, seed: derive_seed(seed, stream::SCENARIO, 0) };
                (perturb(&sensors_true, p), Some(p))
            }
        };
        ScenarioFile {
            version: SCENARIO_VERSION,
            kind,
            domain: [-5.0, 5.0, -5.0, 5.0],
            grid_size,
            sensors_true,
            sensors_assumed,
            region_radius: 2.0,
            v_inner: 1.0,
            v_outer: 2.0,
            noise_rule: NoiseRule::default(),
            perturbation,
            include_self_pairs: true,
            prior_box: [0.5, 3.0],
            noise_seed: derive_seed(seed, stream::NOISE, 0),
        }
    }

    pub fn half_width(&self) -> f64 {
        self.domain[1]
    }

    pub fn validate(&self) -> Result<()> {
        let [x0, x1, y0, y1] = self.domain;
        if !(x1 > 0.0 && x0 == -x1 && y0 == x0 && y1 == x1) {
            return Err(Error::input(format!("domain must be a centred square, got {:?}", self.domain)));
        }
        if self.grid_size < 3 {
            return Err(Error::input("G must be at least 3"));
        }
        if self.sensors_true.len() < 2 || self.sensors_true.len() != self.sensors_assumed.len() {
            return Err(Error::input("need at least two sensors with matching true/assumed lists"));
        }
        let geom = Geometry::new(self.grid_size, self.half_width());
        if !self.sensors_true.iter().chain(&self.sensors_assumed).all(|&p| geom.contains(p)) {
            return Err(Error::input("every sensor must lie inside the domain"));
        }
        if self.kind == ScenarioKind::WellSpecified && self.sensors_true != self.sensors_assumed {
            return Err(Error::input("well-specified scenario must assume the true sensor positions"));
        }
        if !(self.v_inner > 0.0 && self.v_outer > 0.0) {
            return Err(Error::input("velocities must be positive"));
        }
        BoxReparam::new(self.prior_box[0], self.prior_box[1])?;
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s: ScenarioFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if s.version != SCENARIO_VERSION {
            return Err(Error::input(format!("unsupported scenario version {}", s.version)));
        }
        s.validate()?;
        Ok(s)
    }

    pub fn true_velocity(&self) -> Result<VelocityGrid> {
        let (r, vi, vo) = (self.region_radius, self.v_inner, self.v_outer);
        VelocityGrid::from_fn(self.grid_size, self.half_width(), |p| {
            if (p[0] * p[0] + p[1] * p[1]).sqrt() <= r {
                vi
            } else {
                vo
            }
        })
    }

    /// Simulates the observations and assembles the statistical model that
    /// assumes `sensors_assumed`.
    pub fn build(&self) -> Result<SensorScenario> {
        self.validate()?;
        let velocity_true = self.true_velocity()?;
        let clean = travel_times(&velocity_true, &self.sensors_true, self.include_self_pairs)?;
        let sd: Vec<f64> = clean.iter().map(|&c| self.noise_rule.sd(c)).collect();
        let mut rng = seed::rng(self.noise_seed);
        let y: Vec<f64> = clean
            .iter()
            .zip(&sd)
            .map(|(c, s)| {
                let z: f64 = rng.sample(StandardNormal);
                c + s * z
            })
            .collect();
        let n = y.len();
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let provenance = match self.kind {
            ScenarioKind::WellSpecified => Provenance::WellSpecified,
            ScenarioKind::MisspecifiedSensors => Provenance::Misspecified,
        };
        let data = Dataset::new(x, Array2::from_shape_vec((n, 1), y).expect("n x 1"), provenance, self.noise_seed)?;
        let reparam = BoxReparam::new(self.prior_box[0], self.prior_box[1])?;
        let forward = TravelTimeModel::new(
            Geometry::new(self.grid_size, self.half_width()),
            self.sensors_assumed.clone(),
            reparam,
            self.include_self_pairs,
        )?;
        let model = RegressionModel::new(RegressionFn::TravelTime(Arc::new(forward)), NoiseModel::PerChannel { sd: sd.clone() })?;
        let prior = Prior::uniform_box(self.grid_size * self.grid_size, reparam.lo, reparam.hi)?;
        Ok(SensorScenario {
            sensors_true: self.sensors_true.clone(),
            sensors_assumed: self.sensors_assumed.clone(),
            velocity_true,
            noise_rule: self.noise_rule,
            clean,
            noise_sd: sd,
            data,
            model,
            prior,
        })
    }
}

fn perturb(sensors: &[Point], p: Perturbation) -> Vec<Point> {
    let mut rng = seed::rng(p.seed);
    sensors
        .iter()
        .map(|s| {
            let a: f64 = rng.random_range(0.0..2.0 * PI);
            [s[0] + p.magnitude * a.cos(), s[1] + p.magnitude * a.sin()]
        })
        .collect()
}

/// A built scenario: truth, observations, and the statistical model.
#[derive(Debug, Clone)]
pub struct SensorScenario {
    pub sensors_true: Vec<Point>,
    pub sensors_assumed: Vec<Point>,
    pub velocity_true: VelocityGrid,
    pub noise_rule: NoiseRule,
    /// Noise-free travel times, one per channel.
    pub clean: Vec<f64>,
    pub noise_sd: Vec<f64>,
    pub data: Dataset,
    pub model: RegressionModel,
    pub prior: Prior,
}

impl SensorScenario {
    pub fn is_well_specified(&self) -> bool {
        self.sensors_true == self.sensors_assumed
    }
}

pub fn make_scenario(kind: ScenarioKind, grid_size: usize, seed: u64) -> Result<SensorScenario> {
    ScenarioFile::canonical(kind, grid_size, seed).build()
}

/// Convex hull (counter-clockwise, no collinear points) by the monotone chain.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Point, a: Point, b: Point| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

pub fn inside_hull(hull: &[Point], p: Point) -> bool {
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
    })
}

/// `G × G` mask of the nodes inside the sensors' convex hull.
pub fn hull_mask(geometry: &Geometry, sensors: &[Point]) -> Array2<bool> {
    let hull = convex_hull(sensors);
    Array2::from_shape_fn((geometry.g, geometry.g), |(iy, ix)| inside_hull(&hull, geometry.node_position(ix, iy)))
}

/// Number of channels for `s` sensors.
pub fn channel_count(sensors: usize, include_self_pairs: bool) -> usize {
    channel_pairs(sensors, include_self_pairs).len()
}
