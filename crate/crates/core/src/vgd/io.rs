use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::vgd::{ParticleEnsemble, Target, VgdConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KgdPoint {
    pub iteration: usize,
    pub kgd: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KgdTrace {
    pub points: Vec<KgdPoint>,
}

impl KgdTrace {
    /// KGD at the given iteration, if recorded.
    pub fn at(&self, iteration: usize) -> Option<f64> {
        self.points.iter().find(|p| p.iteration == iteration).map(|p| p.kgd)
    }

    pub fn last(&self) -> Option<KgdPoint> {
        self.points.last().copied()
    }

    /// Mean of KGD² over the recorded iterations `≤ upto`.
    pub fn time_averaged_kgd2(&self, upto: usize) -> Option<f64> {
        let v: Vec<f64> = self.points.iter().filter(|p| p.iteration <= upto).map(|p| p.kgd * p.kgd).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["iteration", "kgd"])?;
        for p in &self.points {
            w.write_record([p.iteration.to_string(), p.kgd.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse_err = || Error::input(format!("malformed KGD trace row {rec:?}"));
            let iteration = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
            let kgd = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
            points.push(KgdPoint { iteration, kgd });
        }
        Ok(KgdTrace { points })
    }
}

impl ParticleEnsemble {
    /// One particle per row, columns `theta_1 … theta_d`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record((1..=self.dim()).map(|k| format!("theta_{k}")))?;
        for row in self.particles.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, iteration: usize) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let d = r.headers()?.len();
        let mut values = Vec::new();
        let mut rows = 0;
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: rec.len() });
            }
            for field in rec.iter() {
                values.push(field.trim().parse::<f64>().map_err(|e| Error::input(format!("bad value '{field}': {e}")))?);
            }
            rows += 1;
        }
        let mut e = ParticleEnsemble::new(Array2::from_shape_vec((rows, d), values).expect("rows x d"))?;
        e.iteration = iteration;
        Ok(e)
    }
}

/// JSON sidecar describing how an ensemble snapshot was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleMeta {
    pub target: Target,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub kernel: KernelSpec,
    /// Iteration the snapshot was taken at (`< T` after an aborted run).
    pub iteration: usize,
}

impl EnsembleMeta {
    pub fn new(config: &VgdConfig, ensemble: &ParticleEnsemble) -> Self {
        EnsembleMeta {
            target: config.target,
            n: config.particles,
            t: config.iterations,
            epsilon: config.step_size,
            seed: config.seed,
            kernel: config.kernel,
            iteration: ensemble.iteration,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}
