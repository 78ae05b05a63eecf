//! Minibatch training with validation-based checkpoint selection.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::datagen::{Dataset, Materialized, Split};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::models::{checkpoint, Model, Registry};
use crate::rng::{derive_rng, streams, SeedSpec};

use super::config::{ExperimentConfig, ModelEntry, DROP_PATH_GRID, LR_GRID};
use super::evaluate::evaluate_model;
use super::optim::Adam;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-pixel MSE over the epoch's minibatches.
    pub train_loss: f64,
    pub val: MetricReport,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub crate_version: String,
    pub device: String,
    pub threads: usize,
}

impl Environment {
    pub fn current(device: &str) -> Self {
        Self {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            device: device.into(),
            threads: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub model: String,
    pub lr: f64,
    pub drop_path: f64,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    /// Per-pixel validation MSE of the best checkpoint.
    pub best_val_mse: Option<f64>,
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
    pub wall_clock_s: f64,
    pub environment: Environment,
}

/// Training split held in memory plus the index ranges used for fitting and validation.
pub struct TrainData {
    pub split: Materialized,
    pub fit: std::ops::Range<usize>,
    pub val: std::ops::Range<usize>,
}

impl TrainData {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let ds = Dataset::build(cfg.data.dataset_spec(Split::Train, cfg.seed))?;
        let split = ds.materialize_with(cfg.perturbation.as_ref())?;
        let (fit, val) = cfg.data.train_val_split();
        Ok(Self { split, fit, val })
    }
}

/// Hyper-parameters of a single training run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunParams {
    pub lr: f64,
    pub drop_path: f64,
}

/// Trains `entry` under `cfg` into `dir`, writing checkpoints and `history.json`.
/// `progress` is called after every epoch.
pub fn train_model(
    cfg: &ExperimentConfig,
    entry: &ModelEntry,
    params: RunParams,
    data: &TrainData,
    dir: &Path,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<(RunRecord, Model<f32>)> {
    let start = Instant::now();
    let registry = Registry::with_defaults();
    let model_cfg = entry.resolve(&registry, &cfg.data, params.drop_path)?;
    let mut model = registry.build(&entry.name, &model_cfg, cfg.seed)?;
    super::evaluate::check_compatible(&model, &data.split)?;
    let ckpt_dir = dir.join("checkpoints");
    let best_path = ckpt_dir.join("best.safetensors");
    let last_path = ckpt_dir.join("last.safetensors");
    let mut record = RunRecord {
        config_hash: cfg.hash(),
        model: entry.name.clone(),
        lr: params.lr,
        drop_path: params.drop_path,
        history: Vec::new(),
        best_epoch: None,
        best_val_mse: None,
        best_checkpoint: best_path.clone(),
        last_checkpoint: last_path.clone(),
        wall_clock_s: 0.0,
        environment: Environment::current(&cfg.device),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    checkpoint::save(&model, &best_path, &[("epoch", "0".into())])?;
    checkpoint::save(&model, &last_path, &[("epoch", "0".into())])?;

    let mut opt = Adam::new(&model.params, params.lr, cfg.train.betas);
    let batch = cfg.train.batch_size;
    let mut order: Vec<usize> = data.fit.clone().collect();
    for epoch in 1..=cfg.train.epochs {
        let t0 = Instant::now();
        order.sort_unstable();
        order.shuffle(&mut derive_rng(SeedSpec::new(cfg.seed, streams::EPOCH_ORDER + epoch as u64)));
        let mut total = 0.0;
        let mut batches = 0;
        for (bi, chunk) in order.chunks(batch).enumerate() {
            let pair = data.split.batch(chunk)?;
            let step = opt.steps();
            let g = Graph::<f32>::training(SeedSpec::new(cfg.seed, streams::DROP_PATH + step));
            let x = Var::constant(pair.context.data().clone());
            let y = model.forward(&g, &x);
            let loss = g.mse_loss(&y, &Var::constant(pair.target.data().clone()));
            let l = loss.value().item() as f64;
            if !l.is_finite() {
                return Err(Error::NonFinite { epoch, batch: bi, lr: params.lr, loss: l });
            }
            let grads = g.backward(&loss).collect(&model.params);
            opt.update(&mut model.params, &grads);
            total += l;
            batches += 1;
        }
        let val = if data.val.is_empty() {
            evaluate_model(&model, &data.split, data.fit.clone(), batch)?
        } else {
            evaluate_model(&model, &data.split, data.val.clone(), batch)?
        };
        let meta = [("epoch", epoch.to_string()), ("val_mse_pixel", format!("{:e}", val.mse_pixel))];
        checkpoint::save(&model, &last_path, &meta)?;
        if record.best_val_mse.map_or(true, |b| val.mse_pixel < b) {
            checkpoint::save(&model, &best_path, &meta)?;
            record.best_val_mse = Some(val.mse_pixel);
            record.best_epoch = Some(epoch);
        }
        let rec = EpochRecord { epoch, train_loss: total / batches.max(1) as f64, val, seconds: t0.elapsed().as_secs_f64() };
        progress(&rec);
        record.history.push(rec);
        record.wall_clock_s = start.elapsed().as_secs_f64();
        write_json(&dir.join("history.json"), &record)?;
    }
    record.wall_clock_s = start.elapsed().as_secs_f64();
    write_json(&dir.join("history.json"), &record)?;
    Ok((record, model))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value).expect("record serializes");
    crate::datagen::container::write_atomic(path, &bytes)
}

/// Outcome of a full training command.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    /// One record per run; a single entry unless the grid sweep is on.
    pub runs: Vec<RunRecord>,
    pub best: usize,
}

impl TrainOutcome {
    pub fn best_run(&self) -> &RunRecord {
        &self.runs[self.best]
    }
}

/// Trains the configured model into its run directory. With `train.grid` every
/// learning-rate × drop-path pair is trained and the run with the lowest
/// validation MSE is selected.
pub fn train(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&str, &EpochRecord)) -> Result<TrainOutcome> {
    let run_dir = cfg.run_dir();
    std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    crate::datagen::container::write_atomic(&run_dir.join("config.yaml"), cfg.to_yaml().as_bytes())?;
    let data = TrainData::build(cfg)?;
    let grid: Vec<RunParams> = if cfg.train.grid {
        LR_GRID.iter().flat_map(|&lr| DROP_PATH_GRID.iter().map(move |&dp| RunParams { lr, drop_path: dp })).collect()
    } else {
        vec![RunParams { lr: cfg.train.lr, drop_path: cfg.train.drop_path }]
    };
    let mut runs = Vec::with_capacity(grid.len());
    for p in &grid {
        let (dir, label) = if cfg.train.grid {
            let label = format!("lr{:e}_dp{}", p.lr, p.drop_path);
            (run_dir.join("grid").join(&label), label)
        } else {
            (run_dir.clone(), cfg.model.name.clone())
        };
        let (rec, _) = train_model(cfg, &cfg.model, *p, &data, &dir, &mut |e| progress(&label, e))?;
        runs.push(rec);
    }
    let best = select_best(&runs);
    if cfg.train.grid {
        write_json(&run_dir.join("grid.json"), &runs)?;
        let chosen = &runs[best];
        let dst = run_dir.join("checkpoints");
        std::fs::create_dir_all(&dst).map_err(|e| Error::io(&dst, e))?;
        let bytes = std::fs::read(&chosen.best_checkpoint).map_err(|e| Error::io(&chosen.best_checkpoint, e))?;
        crate::datagen::container::write_atomic(&dst.join("best.safetensors"), &bytes)?;
        write_json(&run_dir.join("history.json"), chosen)?;
    }
    Ok(TrainOutcome { run_dir, runs, best })
}

/// Index of the run with the lowest best validation MSE (first on ties; runs
/// without history rank last).
pub fn select_best(runs: &[RunRecord]) -> usize {
    let key = |r: &RunRecord| r.best_val_mse.unwrap_or(f64::INFINITY);
    (0..runs.len()).fold(0, |best, i| if key(&runs[i]) < key(&runs[best]) { i } else { best })
}
