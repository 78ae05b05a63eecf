//! Single-pass evaluation over a materialized split.

use std::ops::Range;
use std::path::Path;

use crate::datagen::Materialized;
use crate::error::{Error, Result};
use crate::metrics::{self, FpsProtocol, MetricReport, QualityAccumulator};
use crate::models::{checkpoint, Model, Registry};
use crate::tensor::Tensor;
use crate::types::{Role, VideoBatch};

use super::bench::{clean_test_split, perturbed_test_split};
use super::config::ExperimentConfig;

/// Accumulates quality statistics of `predict` over clips `range` in batches.
pub fn accumulate(
    data: &Materialized,
    range: Range<usize>,
    batch_size: usize,
    mut predict: impl FnMut(&VideoBatch) -> Result<VideoBatch>,
) -> Result<QualityAccumulator> {
    let mut acc = QualityAccumulator::new(data.spec.frame_spec.pixels());
    let idx: Vec<usize> = range.collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let pair = data.batch(chunk)?;
        let pred = predict(&pair.context)?;
        if pred.shape() != pair.target.shape() {
            return Err(Error::contract(format!(
                "prediction shape {:?} does not match target shape {:?}",
                pred.shape(),
                pair.target.shape()
            )));
        }
        acc.add(&pred, &pair.target);
    }
    Ok(acc)
}

/// Quality metrics of `model` on clips `range`.
pub fn evaluate_model(model: &Model<f32>, data: &Materialized, range: Range<usize>, batch_size: usize) -> Result<MetricReport> {
    check_compatible(model, data)?;
    let acc = accumulate(data, range, batch_size, |ctx| model.predict(ctx))?;
    Ok(MetricReport::from_accumulator(&acc))
}

pub fn check_compatible(model: &Model<f32>, data: &Materialized) -> Result<()> {
    let cfg = &model.config;
    let fs = data.spec.frame_spec;
    let want = (cfg.t, cfg.t_prime, cfg.frame_spec);
    let got = (data.spec.t, data.spec.t_prime, fs);
    if want != got {
        return Err(Error::contract(format!(
            "model expects clips (T={}, T'={}, {}×{}×{}), dataset has (T={}, T'={}, {}×{}×{})",
            want.0, want.1, want.2.channels, want.2.height, want.2.width, got.0, got.1, fs.channels, fs.height, fs.width
        )));
    }
    Ok(())
}

/// Repeats the last context frame `t_prime` times.
pub fn copy_last_frame(context: &VideoBatch, t_prime: usize) -> VideoBatch {
    let (b, t) = (context.batch(), context.len());
    let fs = context.spec();
    let mut data = Vec::with_capacity(b * t_prime * fs.pixels());
    for bi in 0..b {
        let last = context.frame(bi, t - 1);
        for _ in 0..t_prime {
            data.extend_from_slice(last);
        }
    }
    VideoBatch::new(Tensor::new(vec![b, t_prime, fs.channels, fs.height, fs.width], data), fs, Role::Prediction)
        .expect("copied frames keep the spec")
}

/// Quality metrics of the copy-last-frame baseline.
pub fn evaluate_copy_baseline(data: &Materialized, range: Range<usize>) -> Result<MetricReport> {
    let t_prime = data.spec.t_prime;
    let acc = accumulate(data, range, 64, |ctx| Ok(copy_last_frame(ctx, t_prime)))?;
    Ok(MetricReport::from_accumulator(&acc))
}

/// Adds parameter count, MACs and (optionally) throughput to a report.
pub fn add_compute(report: &mut MetricReport, model: &Model<f32>, fps: Option<FpsProtocol>) -> Result<()> {
    report.params_m = Some(metrics::count_params(model) as f64 / 1e6);
    report.flops_g = Some(metrics::estimate_flops(model)?.giga());
    if let Some(p) = fps {
        let m = metrics::measure_fps(model, p);
        report.fps = Some(m.fps);
        report.device = m.device;
    }
    Ok(())
}

/// Loads a checkpoint and evaluates it on the configured test split (perturbed
/// when the config names a perturbation), with parameter, MAC and FPS figures.
pub fn evaluate_checkpoint(cfg: &ExperimentConfig, path: &Path) -> Result<MetricReport> {
    let model = checkpoint::load(path, &Registry::with_defaults())?;
    let data = match &cfg.perturbation {
        Some(p) => perturbed_test_split(cfg, p.kind)?,
        None => clean_test_split(cfg)?,
    };
    let mut report = evaluate_model(&model, &data, 0..data.len(), cfg.train.batch_size)?;
    add_compute(&mut report, &model, (!cfg.bench.skip_fps).then(|| cfg.bench.fps.protocol()))?;
    Ok(report)
}
