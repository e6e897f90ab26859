use std::fs;
use std::path::{Path, PathBuf};

use feduaa_core::data::{generate, load_manifest, write_dataset, NoiseSpec};
use feduaa_core::federation::evaluate_models;
use feduaa_core::{
    gradcheck, run_experiment, AggregationMode, Checkpoint, Error, FederatedDataset, Result,
};

use crate::config::ExperimentConfig;

pub const NOISE_CSV_HEADER: &str = "sigma2,method,average_auc";
const SWEEP_METHODS: [(&str, AggregationMode); 3] = [
    ("uaw", AggregationMode::Uaw),
    ("static_uniform", AggregationMode::StaticUniform),
    ("singleset", AggregationMode::None),
];

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| io_err(parent, source))?;
    }
    fs::write(path, text).map_err(|source| io_err(path, source))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn echo_config(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    write_file(&out.join("resolved_config.toml"), &cfg.to_toml())
}

fn load_data(cfg: &ExperimentConfig) -> Result<FederatedDataset> {
    match &cfg.data.manifest {
        Some(path) => load_manifest(path),
        None => generate(&cfg.gen_spec()?),
    }
}

pub fn generate_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let spec = cfg.gen_spec()?;
    let data = generate(&spec)?;
    let manifest = write_dataset(&out.join("data"), &data)?;
    echo_config(cfg, out)?;
    for p in &data.partitions {
        println!("{}: {} samples, K={}", p.client_id, p.len(), p.classes);
    }
    println!("manifest={}", manifest.display());
    Ok(())
}

pub fn train_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let run = cfg.run_config()?;
    let data = load_data(cfg)?;
    echo_config(cfg, out)?;
    let result = run_experiment(&run, data)?;
    result.write(out)?;
    for c in &result.final_eval.clients {
        println!("{}: auc={} accuracy={}", c.client_id, c.auc, c.accuracy);
    }
    println!("average_auc={}", result.final_eval.average_auc);
    Ok(())
}

/// Returns whether every term passed.
pub fn gradcheck_cmd(seed: u64, cases: usize, flip_tce_sign: bool) -> Result<bool> {
    let report = gradcheck::run(seed, cases, flip_tce_sign)?;
    for t in &report.terms {
        println!("{} max_rel_error={:e}", t.term, t.max_rel_error);
    }
    if report.passed() {
        println!(
            "gradcheck passed: {} cases, tolerance {:e}",
            report.cases,
            gradcheck::TOLERANCE
        );
    } else {
        let worst = report.worst();
        println!(
            "gradcheck FAILED: {} error {:e} in case seed {}",
            worst.term, worst.max_rel_error, worst.worst_seed
        );
    }
    Ok(report.passed())
}

/// Trains any missing arm under `<out>/runs/<method>`, then evaluates every arm
/// on increasingly corrupted test sets.
pub fn noise_sweep_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    let base = cfg.run_config()?;
    echo_config(cfg, out)?;
    let mut csv = format!("{NOISE_CSV_HEADER}\n");
    for (method, mode) in SWEEP_METHODS {
        let run = feduaa_core::RunConfig {
            aggregation: mode,
            ..base.clone()
        };
        run.validate()?;
        let run_dir = out.join("runs").join(method);
        let ckpt_dir = run_dir.join("checkpoints");
        if !ckpt_dir.exists() {
            let mut arm = cfg.clone();
            arm.ablation.aggregation = method.into();
            echo_config(&arm, &run_dir)?;
            run_experiment(&run, data.clone())?.write(&run_dir)?;
        }
        let models = data
            .partitions
            .iter()
            .map(|p| Checkpoint::read(&checkpoint_path(&ckpt_dir, &p.client_id))?.into_model())
            .collect::<Result<Vec<_>>>()?;
        for &sigma_squared in &cfg.noise.sigmas {
            let noise = Some((NoiseSpec { sigma_squared }, cfg.seed));
            let report = evaluate_models(&models, &data, run.head, run.temperature, noise)?;
            csv.push_str(&format!(
                "{sigma_squared},{method},{}\n",
                report.average_auc
            ));
        }
    }
    let path = out.join("noise_sweep.csv");
    write_file(&path, &csv)?;
    print!("{csv}");
    Ok(())
}

fn checkpoint_path(dir: &Path, client_id: &str) -> PathBuf {
    dir.join(format!("{client_id}.ckpt"))
}
