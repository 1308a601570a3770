use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    WellSpecified,
    Misspecified,
    Observed,
}

/// Paired covariates (`n × q`) and responses (`n × p`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub provenance: Provenance,
    pub generator_seed: u64,
}

/// JSON sidecar written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub task: String,
    pub n: usize,
    pub seed: u64,
    pub sigma: f64,
    pub theta_true: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array2<f64>, provenance: Provenance, generator_seed: u64) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.nrows() });
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::input("responses must be finite"));
        }
        Ok(Dataset {
            x: x.as_standard_layout().into_owned(),
            y: y.as_standard_layout().into_owned(),
            provenance,
            generator_seed,
        })
    }

    /// A dataset with no observations; VGD then targets the prior.
    pub fn empty(q: usize, p: usize) -> Self {
        Dataset { x: Array2::zeros((0, q)), y: Array2::zeros((0, p)), provenance: Provenance::Observed, generator_seed: 0 }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same covariates with new responses.
    pub fn with_responses(&self, y: Array2<f64>, provenance: Provenance, generator_seed: u64) -> Result<Self> {
        Dataset::new(self.x.clone(), y, provenance, generator_seed)
    }

    /// Sample standard deviation (n − 1 denominator) of the first response coordinate.
    pub fn response_sd(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let col = self.y.column(0);
        let mean = col.sum() / n as f64;
        (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let q = self.x.ncols();
        let p = self.y.ncols();
        let header: Vec<String> = (0..q).map(|i| format!("x_{i}")).chain((0..p).map(|i| format!("y_{i}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for (x, y) in self.x.rows().into_iter().zip(self.y.rows()) {
            let fields: Vec<String> = x.iter().chain(y.iter()).map(|v| v.to_string()).collect();
            writeln!(w, "{}", fields.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, provenance: Provenance, generator_seed: u64) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let q = headers.iter().filter(|h| h.starts_with("x_")).count();
        let p = headers.iter().filter(|h| h.starts_with("y_")).count();
        if q + p != headers.len() || q == 0 || p == 0 {
            return Err(Error::input(format!("{}: expected header x_0..,y_0.., got {:?}", path.display(), headers)));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for record in reader.records() {
            let record = record?;
            for (k, field) in record.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::input(format!("{}: bad number {field:?}", path.display())))?;
                if k < q {
                    xs.push(v)
                } else {
                    ys.push(v)
                }
            }
        }
        let n = xs.len() / q;
        let x = Array2::from_shape_vec((n, q), xs).map_err(|e| Error::input(e.to_string()))?;
        let y = Array2::from_shape_vec((n, p), ys).map_err(|e| Error::input(e.to_string()))?;
        Dataset::new(x, y, provenance, generator_seed)
    }
}

impl DatasetMeta {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
    }
}
