use std::fs;
use std::path::{Path, PathBuf};

use provgd::misspec::{self, predictive_bands, write_bands_csv, DiagnosticConfig};
use provgd::model::{generate_dataset, Dataset, DatasetMeta, Provenance, Task};
use provgd::tomo::{run_tomography, write_grid_csv, ScenarioFile, TomoPreset};
use provgd::vgd::{self, EnsembleMeta, ParticleEnsemble, Target};
use provgd::Error;

use crate::config::{required, write_json, DiagnoseConfig, FitConfig, KgdConfig, SimulateConfig, TomoConfig};
use crate::CliError;

fn prepare(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::usage(format!("cannot create {}: {e}", out.display())))
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Reads a dataset CSV and, when present, its JSON sidecar.
fn load_dataset(path: &Path) -> Result<(Dataset, Option<DatasetMeta>), CliError> {
    if !path.is_file() {
        return Err(CliError::usage(format!("dataset {} not found", path.display())));
    }
    let meta_path = sidecar(path);
    let meta = if meta_path.is_file() { Some(DatasetMeta::read(&meta_path).map_err(CliError::usage_from)?) } else { None };
    let seed = meta.as_ref().map_or(0, |m| m.seed);
    let data = Dataset::read_csv(path, Provenance::Observed, seed).map_err(CliError::usage_from)?;
    Ok((data, meta))
}

fn resolve_task(explicit: Option<&str>, meta: Option<&DatasetMeta>) -> Result<Task, CliError> {
    let id = explicit.or(meta.map(|m| m.task.as_str())).ok_or_else(|| CliError::usage("no task given and the dataset has no sidecar naming one"))?;
    id.parse().map_err(CliError::usage_from)
}

pub fn simulate(config: SimulateConfig, out: &Path) -> Result<(), CliError> {
    let (resolved, task) = config.resolve()?;
    let (n, seed) = (resolved.n.expect("resolved"), resolved.seed.expect("resolved"));
    let data = generate_dataset(task, n, seed)?;
    prepare(out)?;
    data.write_csv(&out.join("dataset.csv"))?;
    task.metadata(n, seed).write(&out.join("dataset.json"))?;
    write_json(&resolved, &out.join("simulate_config.json"))?;
    println!("wrote {} observations of {task} to {}", n, out.join("dataset.csv").display());
    Ok(())
}

pub fn fit(config: FitConfig, out: &Path) -> Result<(), CliError> {
    let path = required(config.dataset.clone(), "dataset")?;
    let (data, meta) = load_dataset(&path)?;
    let task = resolve_task(config.task.as_deref(), meta.as_ref())?;
    let (resolved, vgd_config) = config.resolve(task, data.len())?;
    let output = vgd::run_detailed(&vgd_config, &task.model(), &data)?;
    prepare(out)?;
    write_json(&resolved, &out.join("fit_config.json"))?;
    output.ensemble.write_csv(&out.join("ensemble.csv"))?;
    EnsembleMeta::new(&vgd_config, &output.ensemble).write(&out.join("ensemble.json"))?;
    output.trace.write_csv(&out.join("kgd.csv"))?;
    if let Some(e) = output.failure {
        return Err(e.into());
    }
    match output.trace.last() {
        Some(p) => println!("{} fit: N={} T={} final KGD={}", vgd_config.target, vgd_config.particles, vgd_config.iterations, p.kgd),
        None => println!("{} fit: N={} T={}", vgd_config.target, vgd_config.particles, vgd_config.iterations),
    }
    Ok(())
}

pub fn diagnose(config: DiagnoseConfig, out: &Path) -> Result<(), CliError> {
    if let Some(scenario) = &config.scenario {
        return diagnose_scenario(scenario, &config);
    }
    let path = required(config.dataset.clone(), "dataset")?;
    let (data, meta) = load_dataset(&path)?;
    let task = resolve_task(config.task.as_deref(), meta.as_ref())?;
    let (resolved, diag_config) = config.resolve(task, data.len())?;
    let model = task.model();
    let diagnosis = misspec::diagnose(&data, &model, &diag_config)?;
    prepare(out)?;
    write_json(&resolved, &out.join("diagnose_config.json"))?;
    let report = &diagnosis.report;
    report.write(&out.join("report.json"))?;
    report.write_null_csv(&out.join("null.csv"))?;
    diagnosis.bayes.ensemble.write_csv(&out.join("bayes_ensemble.csv"))?;
    diagnosis.pro.ensemble.write_csv(&out.join("pro_ensemble.csv"))?;
    let bands = predictive_bands(&diagnosis.bayes.ensemble, &diagnosis.pro.ensemble, &data, &model)?;
    write_bands_csv(&bands, &out.join("bands.csv"))?;
    println!("{}", report.verdict());
    Ok(())
}

/// The MMD statistic needs isotropic Gaussian noise; the library reports the
/// tomography model as unsupported.
fn diagnose_scenario(path: &Path, config: &DiagnoseConfig) -> Result<(), CliError> {
    let file = ScenarioFile::read(path).map_err(CliError::usage_from)?;
    let scenario = file.build()?;
    let seed = config.seed.unwrap_or(0);
    let base = TomoPreset::desk().vgd_config(&scenario, Target::Bayes, seed);
    let diag = DiagnosticConfig::new(&base, config.replicates.unwrap_or(crate::config::DEFAULT_REPLICATES), seed);
    misspec::diagnose(&scenario.data, &scenario.model, &diag)?;
    Ok(())
}

pub fn tomo(config: TomoConfig, out: &Path) -> Result<(), CliError> {
    let (resolved, preset) = config.resolve()?;
    let seed = resolved.seed.expect("resolved");
    let file = match &resolved.scenario {
        Some(p) => {
            let f = ScenarioFile::read(p).map_err(CliError::usage_from)?;
            if f.grid_size != preset.grid_size {
                return Err(CliError::usage(format!("scenario grid G={} differs from configured G={}", f.grid_size, preset.grid_size)));
            }
            f
        }
        None => ScenarioFile::canonical(resolved.kind.expect("resolved"), preset.grid_size, seed),
    };
    let result = run_tomography(&file, &preset, seed)?;
    prepare(out)?;
    write_json(&resolved, &out.join("tomo_config.json"))?;
    file.write(&out.join("scenario.json"))?;
    write_grid_csv(&result.bayes_maps.mean, &out.join("bayes_mean.csv"))?;
    write_grid_csv(&result.bayes_maps.sd, &out.join("bayes_sd.csv"))?;
    write_grid_csv(&result.pro_maps.mean, &out.join("pro_mean.csv"))?;
    write_grid_csv(&result.pro_maps.sd, &out.join("pro_sd.csv"))?;
    write_grid_csv(&result.scenario.velocity_true.values, &out.join("truth.csv"))?;
    result.bayes_trace.write_csv(&out.join("kgd_bayes.csv"))?;
    result.pro_trace.write_csv(&out.join("kgd_pro.csv"))?;
    write_json(&result.summary, &out.join("summary.json"))?;
    println!(
        "preset={} N={} T={} epsilon={} mean_abs_mean_diff={} mean_abs_sd_diff={}",
        preset.name, preset.particles, preset.iterations, preset.epsilon, result.summary.mean_abs_mean_diff, result.summary.mean_abs_sd_diff
    );
    Ok(())
}

pub fn kgd(config: KgdConfig, out: &Path) -> Result<(), CliError> {
    let ens_path = required(config.ensemble.clone(), "ensemble")?;
    let data_path = required(config.dataset.clone(), "dataset")?;
    let meta = EnsembleMeta::read(&sidecar(&ens_path)).map_err(CliError::usage_from)?;
    let ensemble = ParticleEnsemble::read_csv(&ens_path, meta.iteration).map_err(CliError::usage_from)?;
    let (data, data_meta) = load_dataset(&data_path)?;
    let task = resolve_task(config.task.as_deref(), data_meta.as_ref())?;
    let model = task.model();
    let prior_sd = config.prior_sd.unwrap_or(vgd::DEFAULT_PRIOR_SD);
    let prior = provgd::model::Prior::gaussian(model.param_dim(), 0.0, prior_sd).map_err(CliError::usage_from)?;
    let target = config.target.unwrap_or(meta.target);
    let kernel = config.kernel.unwrap_or(meta.kernel);
    let value = vgd::kgd(&ensemble, &model, &data, &prior, &kernel, target)?;
    let resolved = KgdConfig {
        ensemble: Some(ens_path),
        dataset: Some(data_path),
        task: Some(task.to_string()),
        target: Some(target),
        kernel: Some(kernel),
        prior_sd: Some(prior_sd),
    };
    prepare(out)?;
    write_json(&resolved, &out.join("kgd_config.json"))?;
    write_json(&serde_json::json!({ "kgd": value, "target": target, "iteration": ensemble.iteration }), &out.join("kgd_value.json"))?;
    println!("kgd={value}");
    Ok(())
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Divergence { .. } | Error::Numerical(_) | Error::LikelihoodUnderflow { .. } => 3,
            Error::Unsupported(_) => 4,
            _ => 2,
        };
        CliError { code, message: e.to_string() }
    }
}
