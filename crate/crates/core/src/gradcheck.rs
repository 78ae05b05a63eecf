//! Finite-difference verification of reverse-mode gradients.

use rand_distr::{Distribution, StandardNormal};

use crate::autograd::{Graph, Var};
use crate::models::Model;
use crate::rng::{derive_rng, SeedSpec};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradcheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// Denominator floor of the relative error, so that near-zero gradients are
    /// compared absolutely.
    pub floor: f64,
    /// Standard deviation of the noise added to every parameter before checking.
    /// Zero-initialized output layers would otherwise hide upstream gradients.
    pub jitter: f64,
    /// Check at most this many scalars per parameter tensor (`None`: all).
    pub per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self { eps: 1e-5, floor: 1e-6, jitter: 0.2, per_tensor: None, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// Parameter name and element index of the worst mismatch.
    pub worst: Option<(String, usize)>,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn loss(model: &Model<f64>, context: &Tensor<f64>, target: &Tensor<f64>) -> f64 {
    let g = Graph::<f64>::inference();
    let y = model.forward(&g, &Var::constant(context.clone()));
    g.mse_loss(&y, &Var::constant(target.clone())).value().item()
}

/// Compares analytic parameter gradients of `mse(model(context), target)` with
/// central differences. The model's parameters are jittered in place first.
pub fn check_model(model: &mut Model<f64>, context: &Tensor<f64>, target: &Tensor<f64>, opts: GradcheckOptions) -> GradcheckReport {
    let mut rng = derive_rng(SeedSpec::new(opts.seed, 0));
    let ids: Vec<_> = model.params.ids().collect();
    for &id in &ids {
        for v in model.params.get_mut(id).data_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += opts.jitter * z;
        }
    }
    let analytic = {
        let g = Graph::<f64>::with_grad();
        let y = model.forward(&g, &Var::constant(context.clone()));
        let l = g.mse_loss(&y, &Var::constant(target.clone()));
        g.backward(&l).collect(&model.params)
    };
    let mut report = GradcheckReport { checked: 0, max_rel_err: 0.0, worst: None };
    for (&id, grad) in ids.iter().zip(&analytic) {
        let n = grad.numel();
        let count = opts.per_tensor.map_or(n, |k| k.min(n));
        for j in 0..count {
            let k = if count == n { j } else { j * n / count };
            let orig = model.params.get(id).data()[k];
            model.params.get_mut(id).data_mut()[k] = orig + opts.eps;
            let up = loss(model, context, target);
            model.params.get_mut(id).data_mut()[k] = orig - opts.eps;
            let down = loss(model, context, target);
            model.params.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * opts.eps);
            let err = relative_error(grad.data()[k], numeric, opts.floor);
            report.checked += 1;
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = err;
                report.worst = Some((model.params.name(id).to_string(), k));
            }
        }
    }
    report
}
