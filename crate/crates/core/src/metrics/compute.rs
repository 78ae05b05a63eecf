//! Computational metrics: parameter count, analytic MACs and measured throughput.

use std::time::Instant;

use crate::autograd::{CostLedger, Graph, OpKind, Var};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::tensor::{Float, Tensor};

/// Number of learnable scalars.
pub fn count_params<T: Float>(model: &Model<T>) -> usize {
    model.num_params()
}

/// Runs `f` on a shape-only graph and returns the cost it accumulated.
/// Fails if any executed operation lacks a cost rule.
pub fn trace_cost<T: Float>(f: impl FnOnce(&Graph<T>)) -> Result<CostLedger> {
    let g = Graph::<T>::symbolic();
    f(&g);
    let cost = g.cost();
    if !cost.unregistered().is_empty() {
        return Err(Error::Coverage(cost.unregistered().to_vec()));
    }
    Ok(cost)
}

/// MAC breakdown of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct FlopsEstimate {
    pub macs: u64,
    pub by_kind: Vec<(&'static str, u64)>,
}

impl FlopsEstimate {
    pub fn giga(&self) -> f64 {
        self.macs as f64 / 1e9
    }
}

const KINDS: [(&str, OpKind); 8] = [
    ("conv", OpKind::Conv),
    ("dense", OpKind::Dense),
    ("matmul", OpKind::MatMul),
    ("elementwise", OpKind::Elementwise),
    ("norm", OpKind::Norm),
    ("softmax", OpKind::Softmax),
    ("reduce", OpKind::Reduce),
    ("view", OpKind::View),
];

/// Multiply–accumulates of one forward pass on a single context clip of the
/// model's configured shape.
pub fn estimate_flops<T: Float>(model: &Model<T>) -> Result<FlopsEstimate> {
    let cfg = &model.config;
    let fs = cfg.frame_spec;
    let shape = vec![1, cfg.t, fs.channels, fs.height, fs.width];
    let cost = trace_cost::<T>(|g| {
        model.forward(g, &Var::constant(Tensor::meta(shape)));
    })?;
    Ok(FlopsEstimate {
        macs: cost.total_macs(),
        by_kind: KINDS.iter().map(|(n, k)| (*n, cost.macs_for(k))).collect(),
    })
}

/// Timing protocol for [`measure_fps`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FpsProtocol {
    pub warmup: usize,
    pub timed: usize,
    pub batch: usize,
}

impl Default for FpsProtocol {
    fn default() -> Self {
        Self { warmup: 10, timed: 50, batch: 16 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FpsMeasurement {
    pub fps: f64,
    pub median_latency_s: f64,
    pub protocol: FpsProtocol,
    pub device: String,
}

/// Output frames per second: `batch · T'` over the median latency of the timed
/// inferences. Inputs are constant mid-grey clips.
pub fn measure_fps(model: &Model<f32>, protocol: FpsProtocol) -> FpsMeasurement {
    let cfg = &model.config;
    let fs = cfg.frame_spec;
    let x = Var::constant(Tensor::full(vec![protocol.batch, cfg.t, fs.channels, fs.height, fs.width], 0.5f32));
    let run = || {
        let g = Graph::<f32>::inference();
        std::hint::black_box(model.forward(&g, &x));
    };
    for _ in 0..protocol.warmup {
        run();
    }
    let mut lat: Vec<f64> = (0..protocol.timed.max(1))
        .map(|_| {
            let start = Instant::now();
            run();
            start.elapsed().as_secs_f64()
        })
        .collect();
    lat.sort_by(f64::total_cmp);
    let n = lat.len();
    let median = if n % 2 == 1 { lat[n / 2] } else { 0.5 * (lat[n / 2 - 1] + lat[n / 2]) };
    let frames = (protocol.batch * cfg.t_prime) as f64;
    FpsMeasurement { fps: frames / median.max(1e-12), median_latency_s: median, protocol, device: "cpu".into() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::ConvParams;

    #[test]
    fn conv_closed_form() {
        let cost = trace_cost::<f32>(|g| {
            let x = Var::constant(Tensor::meta(vec![1, 16, 32, 32]));
            let w = Var::constant(Tensor::meta(vec![32, 16, 3, 3]));
            let b = Var::constant(Tensor::meta(vec![32]));
            g.conv2d(&x, &w, Some(&b), ConvParams::same(3));
        })
        .unwrap();
        assert_eq!(cost.macs_for(&OpKind::Conv), 4_718_592);
    }

    #[test]
    fn identity_costs_nothing() {
        assert_eq!(trace_cost::<f32>(|_| {}).unwrap().total_macs(), 0);
    }

    #[test]
    fn unregistered_ops_are_reported() {
        let err = trace_cost::<f32>(|g| {
            let x = Var::constant(Tensor::meta(vec![4]));
            g.custom_unary("mystery", &x, |v| v, |_, _| 1.0);
        })
        .unwrap_err();
        assert!(matches!(err, Error::Coverage(ref names) if names == &["mystery".to_string()]));
    }
}
