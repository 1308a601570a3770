//! Pointwise predictive summaries of a particle mixture `(1/N) Σⱼ N(f_{θⱼ}(x), σ²)`.

use std::path::Path;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{Dataset, RegressionModel};
use crate::vgd::ParticleEnsemble;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandRow {
    pub x: f64,
    pub bayes_mean: f64,
    pub bayes_lo: f64,
    pub bayes_hi: f64,
    pub pro_mean: f64,
    pub pro_lo: f64,
    pub pro_hi: f64,
}

/// Mean and central 95% interval of both predictives at every covariate, in data order.
pub fn predictive_bands(bayes: &ParticleEnsemble, pro: &ParticleEnsemble, data: &Dataset, model: &RegressionModel) -> Result<Vec<BandRow>> {
    let sd = model
        .isotropic_sd()
        .ok_or_else(|| Error::Unsupported("predictive bands need isotropic Gaussian noise".into()))?;
    let std_normal = Normal::standard();
    let summary = |e: &ParticleEnsemble, x: &[f64]| -> Result<(f64, f64, f64)> {
        let f: Vec<f64> = e
            .particles
            .rows()
            .into_iter()
            .map(|t| model.predict_point(t.to_slice().expect("standard layout"), x))
            .collect::<Result<_>>()?;
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        let cdf = |q: f64| f.iter().map(|m| std_normal.cdf((q - m) / sd)).sum::<f64>() / f.len() as f64;
        Ok((mean, mixture_quantile(&f, sd, 0.025, cdf), mixture_quantile(&f, sd, 0.975, cdf)))
    };
    data.x
        .rows()
        .into_iter()
        .map(|x| {
            let xs = x.to_slice().expect("standard layout");
            let (bm, bl, bh) = summary(bayes, xs)?;
            let (pm, pl, ph) = summary(pro, xs)?;
            Ok(BandRow { x: xs[0], bayes_mean: bm, bayes_lo: bl, bayes_hi: bh, pro_mean: pm, pro_lo: pl, pro_hi: ph })
        })
        .collect()
}

/// Bisection for `F(q) = p` on a bracket that contains every component's bulk.
fn mixture_quantile(means: &[f64], sd: f64, p: f64, cdf: impl Fn(f64) -> f64) -> f64 {
    let lo_mean = means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_mean = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (lo_mean - 10.0 * sd, hi_mean + 10.0 * sd);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn write_bands_csv(rows: &[BandRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "bayes_mean", "bayes_lo", "bayes_hi", "pro_mean", "pro_lo", "pro_hi"])?;
    for r in rows {
        w.write_record(
            [r.x, r.bayes_mean, r.bayes_lo, r.bayes_hi, r.pro_mean, r.pro_lo, r.pro_hi].iter().map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Provenance, RegressionFn};
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn single_component_matches_normal_quantiles() {
        let m = RegressionModel::isotropic(RegressionFn::Linear2, 0.5).unwrap();
        let e = ParticleEnsemble::new(array![[1.0, 2.0]]).unwrap();
        let data = Dataset::new(array![[0.5]], array![[0.0]], Provenance::Observed, 0).unwrap();
        let b = predictive_bands(&e, &e, &data, &m).unwrap()[0];
        assert_relative_eq!(b.bayes_mean, 2.0, epsilon = 1e-15);
        assert_relative_eq!(b.bayes_lo, 2.0 - 1.959963984540054 * 0.5, epsilon = 1e-9);
        assert_relative_eq!(b.bayes_hi, 2.0 + 1.959963984540054 * 0.5, epsilon = 1e-9);
        assert_eq!(b.bayes_lo, b.pro_lo);
    }

    #[test]
    fn wide_mixture_has_wider_band() {
        let m = RegressionModel::isotropic(RegressionFn::Quadratic, 0.5).unwrap();
        let narrow = ParticleEnsemble::new(array![[5.0], [5.01]]).unwrap();
        let wide = ParticleEnsemble::new(array![[4.0], [6.0], [8.0]]).unwrap();
        let data = Dataset::new(array![[1.0]], array![[0.0]], Provenance::Observed, 0).unwrap();
        let b = predictive_bands(&narrow, &wide, &data, &m).unwrap()[0];
        assert!(b.pro_hi - b.pro_lo > b.bayes_hi - b.bayes_lo + 1.0);
        assert_relative_eq!(b.pro_mean, 6.0, epsilon = 1e-15);
    }
}
