use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::misspec::NullDistribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSeeds {
    pub master: u64,
    /// Seed the observed-data fits start from.
    pub observed_init: u64,
    /// Null replicate `m` uses `derive_seed(master, stream, m)` for its data and its fits.
    pub null_data_stream: u64,
    pub null_init_stream: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticReport {
    pub d_actual: f64,
    /// `D` of every successful replicate, in replicate order.
    pub null_samples: Vec<f64>,
    pub failed_replicates: Vec<usize>,
    /// Share of successful null samples `≥ d_actual`.
    pub tail_fraction: f64,
    pub theta_hat: Vec<f64>,
    pub lengthscale: f64,
    #[serde(rename = "M")]
    pub replicates: usize,
    pub seeds: ReportSeeds,
}

impl DiagnosticReport {
    pub fn new(d_actual: f64, null: &NullDistribution, theta_hat: Vec<f64>, lengthscale: f64, replicates: usize, seeds: ReportSeeds) -> Self {
        let null_samples = null.samples();
        let extreme = null_samples.iter().filter(|&&v| v >= d_actual).count();
        let tail_fraction = if null_samples.is_empty() { 1.0 } else { extreme as f64 / null_samples.len() as f64 };
        DiagnosticReport {
            d_actual,
            null_samples,
            failed_replicates: null.failed(),
            tail_fraction,
            theta_hat,
            lengthscale,
            replicates,
            seeds,
        }
    }

    /// Empirical `q`-quantile of the null samples (linear interpolation).
    pub fn null_quantile(&self, q: f64) -> Option<f64> {
        let mut v = self.null_samples.clone();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        Some(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
    }

    pub fn verdict(&self) -> String {
        format!("D={} tail_fraction={}", self.d_actual, self.tail_fraction)
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

    /// `replicate,d` rows for the successful replicates.
    pub fn write_null_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["replicate", "d"])?;
        let ok = (0..self.replicates).filter(|m| !self.failed_replicates.contains(m));
        for (m, d) in ok.zip(&self.null_samples) {
            w.write_record([m.to_string(), d.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
