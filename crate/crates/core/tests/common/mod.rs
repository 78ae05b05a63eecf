//! Scalar oracles shared by the integration tests and the acceptance target.
#![allow(dead_code)]

use ministl::autograd::{Graph, Var};
use ministl::models::{Architecture, ModelKind, RecurrentNet};
use ministl::nn::ParamStore;
use ministl::rng::{derive_rng, SeedSpec};
use ministl::{FrameSpec, Model, ModelConfig, Registry, Tensor};
use rand::Rng;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn recurrent(kind: ModelKind, layers: usize, hidden: usize, seed: u64) -> Model<f64> {
    let mut cfg = ModelConfig::mmnist(kind, None);
    cfg.frame_spec = FrameSpec::new(1, 1, 1);
    cfg.rnn_layers = layers;
    cfg.rnn_hidden = hidden;
    cfg.t = 3;
    cfg.t_prime = 2;
    let name = if kind == ModelKind::Convlstm { "convlstm" } else { "predrnn" };
    let mut m = Registry::with_defaults().build_f64(name, &cfg, seed).unwrap();
    // Non-trivial biases so every term of the oracle matters.
    let mut rng = derive_rng(SeedSpec::new(seed, 99));
    let ids: Vec<_> = m.params.ids().collect();
    for id in ids {
        if m.params.name(id).ends_with("bias") {
            let shape = m.params.get(id).shape().to_vec();
            let t = Tensor::from_fn(shape, |_| rng.gen_range(-0.5..0.5));
            m.params.set(id, t);
        }
    }
    m
}

pub fn net(m: &Model<f64>) -> &RecurrentNet {
    match &m.arch {
        Architecture::Recurrent(r) => r,
        _ => panic!("recurrent model expected"),
    }
}

/// Centre tap of a 3×3 convolution as a dense `cout × cin` matrix: at 1×1
/// resolution with same padding only the centre tap sees data.
fn centre(store: &ParamStore<f64>, name: &str) -> (Vec<Vec<f64>>, Vec<f64>) {
    let w = store.get(store.find(&format!("{name}.weight")).unwrap());
    let s = w.shape();
    let (cout, cin, k) = (s[0], s[1], s[2]);
    let c = k / 2;
    let mat = (0..cout).map(|o| (0..cin).map(|i| w.data()[((o * cin + i) * k + c) * k + c]).collect()).collect();
    let bias = store.find(&format!("{name}.bias")).map(|b| store.get(b).data().to_vec()).unwrap_or_else(|| vec![0.0; cout]);
    (mat, bias)
}

fn affine((w, b): &(Vec<Vec<f64>>, Vec<f64>), x: &[f64]) -> Vec<f64> {
    w.iter().zip(b).map(|(row, b)| b + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()).collect()
}

pub fn column(v: &[f64]) -> Var<f64> {
    Var::constant(Tensor::new(vec![1, v.len(), 1, 1], v.to_vec()))
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = derive_rng(SeedSpec::new(seed, 7));
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest deviation of one ConvLSTM step from the scalar gate equations.
pub fn convlstm_cell_error(seed: u64) -> f64 {
    let hid = 3;
    let m = recurrent(ModelKind::Convlstm, 1, hid, seed);
    let (x, h, c) = (random_vec(1, seed + 1), random_vec(hid, seed + 2), random_vec(hid, seed + 3));
    let g = Graph::<f64>::inference();
    let out = net(&m).cell_step(&g, &m.params, 0, &column(&x), &column(&h), &column(&c), None);

    let conv = centre(&m.params, "cells.0.conv");
    let z = affine(&conv, &[x.clone(), h.clone()].concat());
    let (mut h_new, mut c_new) = (vec![0.0; hid], vec![0.0; hid]);
    for k in 0..hid {
        let (i, f, gg, o) = (sigmoid(z[k]), sigmoid(z[hid + k]), z[2 * hid + k].tanh(), sigmoid(z[3 * hid + k]));
        c_new[k] = f * c[k] + i * gg;
        h_new[k] = o * c_new[k].tanh();
    }
    max_abs_diff(out.c.value().data(), &c_new).max(max_abs_diff(out.h.value().data(), &h_new))
}

/// Largest deviation of one ST-LSTM step from the scalar gate equations.
pub fn st_lstm_cell_error(seed: u64) -> f64 {
    let hid = 2;
    let m = recurrent(ModelKind::StLstm, 1, hid, seed);
    let (x, h, c, mm) = (random_vec(1, seed + 1), random_vec(hid, seed + 2), random_vec(hid, seed + 3), random_vec(hid, seed + 4));
    let g = Graph::<f64>::inference();
    let out = net(&m).cell_step(&g, &m.params, 0, &column(&x), &column(&h), &column(&c), Some(&column(&mm)));

    let p = |n: &str| centre(&m.params, &format!("cells.0.{n}"));
    let (xs, hs, ms) = (affine(&p("conv_x"), &x), affine(&p("conv_h"), &h), affine(&p("conv_m"), &mm));
    let mut c_new = vec![0.0; hid];
    let mut m_new = vec![0.0; hid];
    for k in 0..hid {
        let i = sigmoid(xs[k] + hs[k]);
        let f = sigmoid(xs[hid + k] + hs[hid + k]);
        let gg = (xs[2 * hid + k] + hs[2 * hid + k]).tanh();
        c_new[k] = f * c[k] + i * gg;
        let i2 = sigmoid(xs[3 * hid + k] + ms[k]);
        let f2 = sigmoid(xs[4 * hid + k] + ms[hid + k]);
        let g2 = (xs[5 * hid + k] + ms[2 * hid + k]).tanh();
        m_new[k] = f2 * mm[k] + i2 * g2;
    }
    let mem = [c_new.clone(), m_new.clone()].concat();
    let (co, last) = (affine(&p("conv_o"), &mem), affine(&p("conv_last"), &mem));
    let h_new: Vec<f64> =
        (0..hid).map(|k| sigmoid(xs[6 * hid + k] + hs[3 * hid + k] + co[k]) * last[k].tanh()).collect();
    max_abs_diff(out.c.value().data(), &c_new)
        .max(max_abs_diff(out.m.as_ref().unwrap().value().data(), &m_new))
        .max(max_abs_diff(out.h.value().data(), &h_new))
}

pub fn zero_params(m: &mut Model<f64>) {
    let ids: Vec<_> = m.params.ids().collect();
    for id in ids {
        let z = m.params.get(id).map(|_| 0.0);
        m.params.set(id, z);
    }
}

/// Largest deviation from the zero-weight closed forms: ConvLSTM gives
/// c' = c/2 and h' = tanh(c/2)/2; ST-LSTM gives c' = c/2, m' = m/2, h' = 0.
pub fn zero_weight_error(seed: u64) -> f64 {
    let hid = 4;
    let (x, h, c, mm) = (random_vec(1, seed), random_vec(hid, seed + 1), random_vec(hid, seed + 2), random_vec(hid, seed + 3));
    let g = Graph::<f64>::inference();
    let half: Vec<f64> = c.iter().map(|c| 0.5 * c).collect();

    let mut m = recurrent(ModelKind::Convlstm, 1, hid, seed);
    zero_params(&mut m);
    let out = net(&m).cell_step(&g, &m.params, 0, &column(&x), &column(&h), &column(&c), None);
    let h_expect: Vec<f64> = c.iter().map(|c| 0.5 * (0.5 * c).tanh()).collect();
    let mut err = max_abs_diff(out.h.value().data(), &h_expect).max(max_abs_diff(out.c.value().data(), &half));

    let mut m = recurrent(ModelKind::StLstm, 1, hid, seed + 1);
    zero_params(&mut m);
    let out = net(&m).cell_step(&g, &m.params, 0, &column(&x), &column(&h), &column(&c), Some(&column(&mm)));
    err = err.max(max_abs_diff(out.c.value().data(), &half));
    err = err.max(max_abs_diff(out.m.unwrap().value().data(), &mm.iter().map(|m| 0.5 * m).collect::<Vec<_>>()));
    err.max(max_abs_diff(out.h.value().data(), &[0.0; 4]))
}

/// Single-axis scalar oracle: move, then fold back once at either wall.
pub fn oracle_axis(start: f64, vel: f64, max: f64, n: usize) -> Vec<f64> {
    let (mut p, mut v) = (start, vel);
    let mut out = vec![p];
    for _ in 1..n {
        p += v;
        if p < 0.0 {
            p = -p;
            v = -v;
        }
        if p > max {
            p = 2.0 * max - p;
            v = -v;
        }
        out.push(p);
    }
    out
}
