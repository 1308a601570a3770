//! Command configs: a JSON file, then command-line flags on top, then defaults.
//! Every command writes its resolved config back out with all fields set, and
//! that file reproduces the run when passed to `--config`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use provgd::kernels::{BandwidthPolicy, KernelFamily, KernelSpec};
use provgd::misspec::DEFAULT_MAX_FAILED_FRACTION;
use provgd::model::{Prior, Task};
use provgd::tomo::{ScenarioKind, TomoPreset};
use provgd::vgd::{simulation_config, Target, VgdConfig, DEFAULT_INIT_SD, DEFAULT_PRIOR_SD};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let file = File::open(p).map_err(|e| CliError::usage(format!("cannot open config {}: {e}", p.display())))?;
            serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::usage(format!("config {}: {e}", p.display())))
        }
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(provgd::Error::from)?;
    writeln!(w)?;
    Ok(())
}

pub fn required<T>(value: Option<T>, name: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::usage(format!("missing required setting '{name}'")))
}

/// Overwrites every field of `self` that `other` sets.
macro_rules! merge_fields {
    ($self:ident, $other:ident, $($f:ident),+) => {
        $(if $other.$f.is_some() { $self.$f = $other.$f; })+
    };
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub task: Option<String>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
}

impl SimulateConfig {
    pub fn merge(mut self, o: SimulateConfig) -> Self {
        merge_fields!(self, o, task, n, seed);
        self
    }

    pub fn resolve(self) -> Result<(SimulateConfig, Task), CliError> {
        let task: Task = required(self.task.as_deref(), "task")?.parse().map_err(CliError::usage_from)?;
        let n = self.n.unwrap_or(1000);
        if n == 0 {
            return Err(CliError::usage("n must be at least 1"));
        }
        let resolved = SimulateConfig { task: Some(task.to_string()), n: Some(n), seed: Some(self.seed.unwrap_or(0)) };
        Ok((resolved, task))
    }
}

/// VGD settings shared by `fit` and `diagnose`; defaults follow the simulation presets for the task and `n`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VgdSettings {
    #[serde(rename = "N")]
    pub particles: Option<usize>,
    #[serde(rename = "T")]
    pub iterations: Option<usize>,
    pub epsilon: Option<f64>,
    pub kernel: Option<KernelSpec>,
    pub prior_sd: Option<f64>,
    pub init_sd: Option<f64>,
    pub kgd_every: Option<usize>,
}

impl VgdSettings {
    pub fn merge(mut self, o: VgdSettings) -> Self {
        merge_fields!(self, o, particles, iterations, epsilon, kernel, prior_sd, init_sd, kgd_every);
        self
    }

    fn resolve(self, task: Task, n: usize) -> VgdSettings {
        let d = simulation_config(task, n, Target::Bayes, 0);
        VgdSettings {
            particles: Some(self.particles.unwrap_or(d.particles)),
            iterations: Some(self.iterations.unwrap_or(d.iterations)),
            epsilon: Some(self.epsilon.unwrap_or(d.step_size)),
            kernel: Some(self.kernel.unwrap_or(d.kernel)),
            prior_sd: Some(self.prior_sd.unwrap_or(DEFAULT_PRIOR_SD)),
            init_sd: Some(self.init_sd.unwrap_or(DEFAULT_INIT_SD)),
            kgd_every: Some(self.kgd_every.unwrap_or(d.kgd_every)),
        }
    }

    /// Only valid on resolved settings.
    fn vgd_config(&self, task: Task, target: Target, seed: u64) -> Result<VgdConfig, CliError> {
        let dim = task.model().param_dim();
        let prior = Prior::gaussian(dim, 0.0, self.prior_sd.expect("resolved")).map_err(CliError::usage_from)?;
        let init = Prior::gaussian(dim, 0.0, self.init_sd.expect("resolved")).map_err(CliError::usage_from)?;
        let config = VgdConfig {
            target,
            particles: self.particles.expect("resolved"),
            iterations: self.iterations.expect("resolved"),
            step_size: self.epsilon.expect("resolved"),
            kernel: self.kernel.expect("resolved"),
            prior,
            init: Some(init),
            seed,
            kgd_every: self.kgd_every.expect("resolved"),
        };
        config.validate().map_err(CliError::usage_from)?;
        Ok(config)
    }
}

/// Builds a kernel from the flat command-line flags, starting from `base`.
pub fn kernel_from_flags(
    base: Option<KernelSpec>,
    family: Option<KernelFamily>,
    lengthscale: Option<f64>,
    bandwidth: Option<BandwidthPolicy>,
) -> Option<KernelSpec> {
    if family.is_none() && lengthscale.is_none() && bandwidth.is_none() {
        return None;
    }
    let mut k = match (family, base) {
        (Some(KernelFamily::Gaussian), _) => KernelSpec::gaussian(1.0).with_bandwidth(BandwidthPolicy::MedianPerIteration),
        (Some(KernelFamily::InverseMultiquadric), _) => KernelSpec::imq(1.0, 1.0, 0.5).with_bandwidth(BandwidthPolicy::MedianPerIteration),
        (None, Some(b)) => b,
        (None, None) => KernelSpec::imq(1.0, 1.0, 0.5).with_bandwidth(BandwidthPolicy::MedianPerIteration),
    };
    if let Some(l) = lengthscale {
        k = k.with_lengthscale(l).with_bandwidth(BandwidthPolicy::Fixed);
    }
    if let Some(b) = bandwidth {
        k = k.with_bandwidth(b);
    }
    Some(k)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub dataset: Option<PathBuf>,
    /// Taken from the dataset's JSON sidecar when absent.
    pub task: Option<String>,
    pub target: Option<Target>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub vgd: VgdSettings,
}

impl FitConfig {
    pub fn merge(mut self, o: FitConfig) -> Self {
        merge_fields!(self, o, dataset, task, target, seed);
        self.vgd = self.vgd.merge(o.vgd);
        self
    }

    pub fn resolve(self, task: Task, n: usize) -> Result<(FitConfig, VgdConfig), CliError> {
        let target = self.target.unwrap_or(Target::Bayes);
        let seed = self.seed.unwrap_or(0);
        let vgd = self.vgd.resolve(task, n);
        let config = vgd.vgd_config(task, target, seed)?;
        let resolved = FitConfig { dataset: self.dataset, task: Some(task.to_string()), target: Some(target), seed: Some(seed), vgd };
        Ok((resolved, config))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub dataset: Option<PathBuf>,
    /// A tomography scenario file instead of a dataset (no MMD support; exits 4).
    pub scenario: Option<PathBuf>,
    pub task: Option<String>,
    #[serde(rename = "M")]
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub warm_start: Option<bool>,
    pub max_failed_fraction: Option<f64>,
    #[serde(default)]
    pub vgd: VgdSettings,
}

pub const DEFAULT_REPLICATES: usize = 100;

impl DiagnoseConfig {
    pub fn merge(mut self, o: DiagnoseConfig) -> Self {
        merge_fields!(self, o, dataset, scenario, task, replicates, seed, warm_start, max_failed_fraction);
        self.vgd = self.vgd.merge(o.vgd);
        self
    }

    pub fn resolve(self, task: Task, n: usize) -> Result<(DiagnoseConfig, provgd::misspec::DiagnosticConfig), CliError> {
        let seed = self.seed.unwrap_or(0);
        let replicates = self.replicates.unwrap_or(DEFAULT_REPLICATES);
        let vgd = self.vgd.resolve(task, n);
        let base = vgd.vgd_config(task, Target::Bayes, seed)?;
        let mut config = provgd::misspec::DiagnosticConfig::new(&base, replicates, seed);
        config.warm_start = self.warm_start.unwrap_or(false);
        config.max_failed_fraction = self.max_failed_fraction.unwrap_or(DEFAULT_MAX_FAILED_FRACTION);
        config.validate().map_err(CliError::usage_from)?;
        let resolved = DiagnoseConfig {
            dataset: self.dataset,
            scenario: None,
            task: Some(task.to_string()),
            replicates: Some(replicates),
            seed: Some(seed),
            warm_start: Some(config.warm_start),
            max_failed_fraction: Some(config.max_failed_fraction),
            vgd,
        };
        Ok((resolved, config))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomoConfig {
    /// Scenario file; the canonical ring scenario of `kind` is generated when absent.
    pub scenario: Option<PathBuf>,
    pub kind: Option<ScenarioKind>,
    pub preset: Option<String>,
    #[serde(rename = "G")]
    pub grid_size: Option<usize>,
    #[serde(rename = "N")]
    pub particles: Option<usize>,
    #[serde(rename = "T")]
    pub iterations: Option<usize>,
    pub epsilon: Option<f64>,
    pub kgd_every: Option<usize>,
    pub seed: Option<u64>,
}

impl TomoConfig {
    pub fn merge(mut self, o: TomoConfig) -> Self {
        merge_fields!(self, o, scenario, kind, preset, grid_size, particles, iterations, epsilon, kgd_every, seed);
        self
    }

    pub fn resolve(self) -> Result<(TomoConfig, TomoPreset), CliError> {
        let name = self.preset.clone().unwrap_or_else(|| "desk".into());
        let mut p = TomoPreset::by_name(&name).map_err(CliError::usage_from)?;
        p.grid_size = self.grid_size.unwrap_or(p.grid_size);
        p.particles = self.particles.unwrap_or(p.particles);
        p.iterations = self.iterations.unwrap_or(p.iterations);
        p.epsilon = self.epsilon.unwrap_or(p.epsilon);
        p.kgd_every = self.kgd_every.unwrap_or(p.kgd_every);
        if p.particles == 0 || !(p.epsilon > 0.0 && p.epsilon.is_finite()) {
            return Err(CliError::usage("N must be positive and epsilon a positive number"));
        }
        let resolved = TomoConfig {
            scenario: self.scenario,
            kind: Some(self.kind.unwrap_or(ScenarioKind::WellSpecified)),
            preset: Some(name),
            grid_size: Some(p.grid_size),
            particles: Some(p.particles),
            iterations: Some(p.iterations),
            epsilon: Some(p.epsilon),
            kgd_every: Some(p.kgd_every),
            seed: Some(self.seed.unwrap_or(0)),
        };
        Ok((resolved, p))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KgdConfig {
    pub ensemble: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub task: Option<String>,
    /// Overrides the target recorded in the ensemble sidecar.
    pub target: Option<Target>,
    pub kernel: Option<KernelSpec>,
    pub prior_sd: Option<f64>,
}

impl KgdConfig {
    pub fn merge(mut self, o: KgdConfig) -> Self {
        merge_fields!(self, o, ensemble, dataset, task, target, kernel, prior_sd);
        self
    }
}
