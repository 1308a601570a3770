//! The simulation-study catalog: three low-dimensional regression problems
//! and a sinusoid basis model, each with a well-specified and a misspecified
//! data generator.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, DatasetMeta, Provenance, RegressionFn, RegressionModel};
use crate::seed::{self, Rng as SeededRng};

pub const DEFAULT_SINUSOID_TERMS: usize = 5;

/// Smallest |x| drawn for the `sin(1/x)` generator.
pub const SINUSOID_COVARIATE_GAP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Quadratic,
    Sigmoid,
    Linear,
    Sinusoid { terms: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    WellSpecified,
    Misspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Task {
    pub problem: Problem,
    pub regime: Regime,
}

impl Task {
    pub const fn new(problem: Problem, regime: Regime) -> Self {
        Task { problem, regime }
    }

    /// The six tasks of the main simulation study.
    pub fn simulation_study() -> Vec<Task> {
        let mut out = Vec::new();
        for problem in [Problem::Quadratic, Problem::Sigmoid, Problem::Linear] {
            for regime in [Regime::WellSpecified, Regime::Misspecified] {
                out.push(Task::new(problem, regime));
            }
        }
        out
    }

    pub fn noise_sd(&self) -> f64 {
        match self.problem {
            Problem::Quadratic => 0.5,
            Problem::Sigmoid => 0.05,
            Problem::Linear => 0.8,
            Problem::Sinusoid { .. } => 0.2,
        }
    }

    pub fn model(&self) -> RegressionModel {
        let function = match self.problem {
            Problem::Quadratic => RegressionFn::Quadratic,
            Problem::Sigmoid => RegressionFn::Sigmoid,
            Problem::Linear => RegressionFn::Linear2,
            Problem::Sinusoid { terms } => RegressionFn::SinusoidSum { terms },
        };
        RegressionModel::isotropic(function, self.noise_sd()).expect("catalog noise levels are positive")
    }

    /// Data-generating parameter of the well-specified generator.
    pub fn true_theta(&self) -> Vec<f64> {
        match self.problem {
            Problem::Quadratic | Problem::Sigmoid => vec![5.0],
            Problem::Linear => vec![5.0, 3.0],
            Problem::Sinusoid { terms } => (1..=terms).map(|k| 1.0 / k as f64).collect(),
        }
    }

    pub fn theta_true(&self) -> Option<Vec<f64>> {
        match self.regime {
            Regime::WellSpecified => Some(self.true_theta()),
            Regime::Misspecified => None,
        }
    }

    fn sample_covariate(&self, rng: &mut SeededRng) -> f64 {
        match self.problem {
            Problem::Quadratic => rng.random_range(0.0..1.0),
            Problem::Sigmoid => rng.random_range(-1.0..1.0),
            Problem::Linear => rng.random_range(-2.0..2.0),
            Problem::Sinusoid { .. } => loop {
                let x: f64 = rng.random_range(-2.0..2.0);
                if x.abs() >= SINUSOID_COVARIATE_GAP {
                    break x;
                }
            },
        }
    }

    pub fn metadata(&self, n: usize, seed: u64) -> DatasetMeta {
        DatasetMeta { task: self.to_string(), n, seed, sigma: self.noise_sd(), theta_true: self.theta_true() }
    }
}

fn open_unit(rng: &mut SeededRng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    }
}

/// Draws `n` observations from the task's generator. Deterministic in `(task, n, seed)`.
pub fn generate_dataset(task: Task, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::input("dataset size must be at least 1"));
    }
    let mut rng = seed::rng(seed);
    let sd = task.noise_sd();
    let model = task.model();
    let theta = task.true_theta();
    let mut x = Array2::zeros((n, 1));
    let mut y = Array2::zeros((n, 1));
    for i in 0..n {
        let (xi, yi) = match (task.problem, task.regime) {
            (Problem::Sigmoid, Regime::Misspecified) => {
                // uniform on (0,1)² ∪ (−1,0)²
                let (a, b) = (open_unit(&mut rng), open_unit(&mut rng));
                if rng.random::<bool>() {
                    (a, b)
                } else {
                    (-a, -b)
                }
            }
            (_, regime) => {
                let xi = task.sample_covariate(&mut rng);
                let z: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
                let mean = match (task.problem, regime) {
                    (_, Regime::WellSpecified) => model.predict_point(&theta, &[xi])?,
                    (Problem::Quadratic, _) => {
                        let u: f64 = rng.sample(StandardNormal);
                        (5.0 + 3.0 * u) * xi * xi
                    }
                    (Problem::Linear, _) => 5.0 + 3.0 * xi + 2.0 * xi * xi,
                    (Problem::Sinusoid { .. }, _) => (1.0 / xi).sin(),
                    (Problem::Sigmoid, _) => unreachable!(),
                };
                (xi, mean + z)
            }
        };
        x[[i, 0]] = xi;
        y[[i, 0]] = yi;
    }
    let provenance = match task.regime {
        Regime::WellSpecified => Provenance::WellSpecified,
        Regime::Misspecified => Provenance::Misspecified,
    };
    Dataset::new(x, y, provenance, seed)
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let regime = match self.regime {
            Regime::WellSpecified => "well",
            Regime::Misspecified => "misspec",
        };
        match self.problem {
            Problem::Quadratic => write!(f, "quadratic-{regime}"),
            Problem::Sigmoid => write!(f, "sigmoid-{regime}"),
            Problem::Linear => write!(f, "linear-{regime}"),
            Problem::Sinusoid { terms } => write!(f, "sinusoid-{regime}:{terms}"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    /// Accepts `<problem>-<well|misspec>`, with an optional `:<terms>` suffix for `sinusoid`.
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::input(format!("unknown task {s:?}"));
        let (head, terms) = match s.split_once(':') {
            Some((h, t)) => (h, Some(t.parse::<usize>().map_err(|_| unknown())?)),
            None => (s, None),
        };
        let (problem, regime) = head.rsplit_once('-').ok_or_else(unknown)?;
        let regime = match regime {
            "well" => Regime::WellSpecified,
            "misspec" => Regime::Misspecified,
            _ => return Err(unknown()),
        };
        let problem = match (problem, terms) {
            ("quadratic", None) => Problem::Quadratic,
            ("sigmoid", None) => Problem::Sigmoid,
            ("linear", None) => Problem::Linear,
            ("sinusoid", t) => Problem::Sinusoid { terms: t.unwrap_or(DEFAULT_SINUSOID_TERMS) },
            _ => return Err(unknown()),
        };
        if let Problem::Sinusoid { terms: 0 } = problem {
            return Err(unknown());
        }
        Ok(Task { problem, regime })
    }
}
