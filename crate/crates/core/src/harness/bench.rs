//! Multi-model benchmark over clean and perturbed test data.

use std::path::PathBuf;

use crate::datagen::{container, Dataset, Materialized, PerturbationKind, Split};
use crate::error::{Error, Result};
use crate::models::{checkpoint, Model, Registry};

use super::config::{ExperimentConfig, ModelEntry};
use super::evaluate::{add_compute, evaluate_model};
use super::report::{ResultRow, ResultsTable, Strip};
use super::train::{train_model, EpochRecord, RunParams, TrainData};

/// Test split for the clean condition: loaded from `data.test_path` or generated.
pub fn clean_test_split(cfg: &ExperimentConfig) -> Result<Materialized> {
    match &cfg.data.test_path {
        Some(p) => container::load(p),
        None => Dataset::build(cfg.data.dataset_spec(Split::Test, cfg.seed))?.materialize(),
    }
}

/// Test split with one perturbation applied to every clip.
pub fn perturbed_test_split(cfg: &ExperimentConfig, kind: PerturbationKind) -> Result<Materialized> {
    let ds = Dataset::build(cfg.data.dataset_spec(Split::Test, cfg.seed))?;
    ds.materialize_with(Some(&cfg.perturbation_for(kind)))
}

pub struct BenchOutcome {
    pub table: ResultsTable,
    pub strips: Vec<Strip>,
    pub run_dir: PathBuf,
}

fn obtain_model(
    cfg: &ExperimentConfig,
    entry: &ModelEntry,
    train: &mut Option<TrainData>,
    progress: &mut dyn FnMut(&str, &EpochRecord),
) -> Result<Model<f32>> {
    if let Some(path) = &entry.checkpoint {
        return checkpoint::load(path, &Registry::with_defaults());
    }
    if train.is_none() {
        *train = Some(TrainData::build(cfg)?);
    }
    let data = train.as_ref().expect("built above");
    let dir = cfg.run_dir().join("models").join(&entry.name);
    let params = RunParams { lr: cfg.train.lr, drop_path: cfg.train.drop_path };
    let (_, last) = train_model(cfg, entry, params, data, &dir, &mut |e| progress(&entry.name, e))?;
    let best = checkpoint::load(&dir.join("checkpoints").join("best.safetensors"), &Registry::with_defaults());
    Ok(best.unwrap_or(last))
}

/// Trains (or loads) every suite entry and evaluates it on the clean test split
/// and on each requested perturbation. Failures become marked rows.
pub fn benchmark(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&str, &EpochRecord)) -> Result<BenchOutcome> {
    let suite = cfg.suite();
    let mut conditions: Vec<(String, Materialized)> = Vec::new();
    if !suite.is_empty() {
        conditions.push(("clean".into(), clean_test_split(cfg)?));
        for &k in &cfg.bench.perturbations {
            conditions.push((k.as_str().into(), perturbed_test_split(cfg, k)?));
        }
    }
    let registry = Registry::with_defaults();
    let mut train = None;
    let mut table = ResultsTable::default();
    let mut strips = Vec::new();
    let fps = (!cfg.bench.skip_fps).then(|| cfg.bench.fps.protocol());
    for entry in &suite {
        let category = registry.get(&entry.name).map(|e| format!("{:?}", e.category)).unwrap_or_default();
        let model = obtain_model(cfg, entry, &mut train, progress);
        let model = match model {
            Ok(m) => m,
            Err(e) => {
                for (cond, _) in &conditions {
                    table.rows.push(ResultRow::failed(&entry.name, &category, cond, &e.to_string()));
                }
                continue;
            }
        };
        for (cond, data) in &conditions {
            let row = evaluate_row(&model, &entry.name, &category, cond, data, cfg.train.batch_size, fps);
            table.rows.push(row.unwrap_or_else(|e| ResultRow::failed(&entry.name, &category, cond, &e.to_string())));
        }
        if let Some((_, clean)) = conditions.first() {
            for i in 0..cfg.bench.strips.min(clean.len()) {
                let pair = clean.batch(&[i])?;
                if let Ok(prediction) = model.predict(&pair.context) {
                    strips.push(Strip { name: format!("{}_{i:03}", entry.name), context: pair.context, prediction, target: pair.target });
                }
            }
        }
    }
    Ok(BenchOutcome { table, strips, run_dir: cfg.run_dir() })
}

fn evaluate_row(
    model: &Model<f32>,
    name: &str,
    category: &str,
    condition: &str,
    data: &Materialized,
    batch: usize,
    fps: Option<crate::metrics::FpsProtocol>,
) -> Result<ResultRow> {
    let mut report = evaluate_model(model, data, 0..data.len(), batch)?;
    add_compute(&mut report, model, if condition == "clean" { fps } else { None })?;
    if report.mse_paper.is_nan() {
        return Err(Error::contract("evaluation produced NaN"));
    }
    Ok(ResultRow {
        model: name.into(),
        category: category.into(),
        condition: condition.into(),
        params_m: report.params_m,
        flops_g: report.flops_g,
        fps: report.fps,
        mse: Some(report.mse_paper),
        mae: Some(report.mae_paper),
        ssim: Some(report.ssim),
        psnr: Some(report.psnr_db),
        status: "ok".into(),
    })
}
