//! Recurrent predictors: stacked ConvLSTM and ST-LSTM cells with an
//! autoregressive rollout.

use crate::autograd::{ConvParams, Graph, Var};
use crate::error::Result;
use crate::nn::{Builder, Conv2d, ConvSpec, Init, ParamStore};
use crate::tensor::{Float, Tensor};

use super::{ModelConfig, ModelKind};

#[derive(Clone, Debug)]
pub enum Cell {
    /// Gates `i, f, g, o` from one convolution over `[x, h]`.
    ConvLstm { conv: Conv2d },
    /// Dual-memory cell with temporal memory `c` and spatio-temporal memory `m`.
    StLstm { conv_x: Conv2d, conv_h: Conv2d, conv_m: Conv2d, conv_o: Conv2d, conv_last: Conv2d },
}

/// Recurrent state of a whole stack.
#[derive(Clone)]
pub struct HiddenState<T: Float> {
    pub h: Vec<Var<T>>,
    pub c: Vec<Var<T>>,
    /// Spatio-temporal memory leaving the top layer (ST-LSTM only).
    pub m: Option<Var<T>>,
}

/// One cell update.
pub struct CellOutput<T: Float> {
    pub h: Var<T>,
    pub c: Var<T>,
    pub m: Option<Var<T>>,
}

#[derive(Clone, Debug)]
pub struct RecurrentNet {
    pub kind: ModelKind,
    pub cells: Vec<Cell>,
    pub readout: Conv2d,
    pub hidden: usize,
    pub channels: usize,
    pub t: usize,
}

fn conv(cin: usize, cout: usize, kernel: usize, bias: bool) -> ConvSpec {
    ConvSpec::new(cin, cout, kernel)
        .params(ConvParams::same(kernel))
        .bias(bias)
        .init(Init::FanInUniform, Init::FanInUniform)
}

impl RecurrentNet {
    pub fn new<T: Float>(cfg: &ModelConfig, b: &mut Builder<'_, T>) -> Result<Self> {
        cfg.validate()?;
        let (hid, k, c) = (cfg.rnn_hidden, cfg.rnn_kernel, cfg.frame_spec.channels);
        let cells = (0..cfg.rnn_layers)
            .map(|l| {
                let cin = if l == 0 { c } else { hid };
                b.scope(format!("cells.{l}"), |b| match cfg.kind {
                    ModelKind::Convlstm => Cell::ConvLstm { conv: Conv2d::new(b, "conv", conv(cin + hid, 4 * hid, k, true)) },
                    ModelKind::StLstm => Cell::StLstm {
                        conv_x: Conv2d::new(b, "conv_x", conv(cin, 7 * hid, k, true)),
                        conv_h: Conv2d::new(b, "conv_h", conv(hid, 4 * hid, k, false)),
                        conv_m: Conv2d::new(b, "conv_m", conv(hid, 3 * hid, k, false)),
                        conv_o: Conv2d::new(b, "conv_o", conv(2 * hid, hid, k, false)),
                        conv_last: Conv2d::new(b, "conv_last", conv(2 * hid, hid, 1, false)),
                    },
                    ModelKind::Metavp => unreachable!("validated recurrent kind"),
                })
            })
            .collect();
        let readout = Conv2d::new(b, "readout", conv(hid, c, 1, false));
        Ok(Self { kind: cfg.kind, cells, readout, hidden: hid, channels: c, t: cfg.t })
    }

    pub fn layers(&self) -> usize {
        self.cells.len()
    }

    pub fn zero_state<T: Float>(&self, g: &Graph<T>, batch: usize, h: usize, w: usize) -> HiddenState<T> {
        let zero = || {
            let shape = vec![batch, self.hidden, h, w];
            if g.is_symbolic() {
                Var::constant(Tensor::meta(shape))
            } else {
                Var::constant(Tensor::zeros(shape))
            }
        };
        HiddenState {
            h: (0..self.layers()).map(|_| zero()).collect(),
            c: (0..self.layers()).map(|_| zero()).collect(),
            m: (self.kind == ModelKind::StLstm).then(zero),
        }
    }

    /// Applies cell `layer` to input `x` with previous `h`, `c` and incoming `m`.
    #[allow(clippy::too_many_arguments)]
    pub fn cell_step<T: Float>(
        &self,
        g: &Graph<T>,
        store: &ParamStore<T>,
        layer: usize,
        x: &Var<T>,
        h: &Var<T>,
        c: &Var<T>,
        m: Option<&Var<T>>,
    ) -> CellOutput<T> {
        match &self.cells[layer] {
            Cell::ConvLstm { conv } => {
                let gates = conv.forward(g, store, &g.concat(&[x, h], 1));
                let parts = g.chunk(&gates, 4, 1);
                let i = g.sigmoid(&parts[0]);
                let f = g.sigmoid(&parts[1]);
                let gg = g.tanh(&parts[2]);
                let o = g.sigmoid(&parts[3]);
                let c_new = g.add(&g.mul(&f, c), &g.mul(&i, &gg));
                let h_new = g.mul(&o, &g.tanh(&c_new));
                CellOutput { h: h_new, c: c_new, m: None }
            }
            Cell::StLstm { conv_x, conv_h, conv_m, conv_o, conv_last } => {
                let m = m.expect("ST-LSTM step needs the spatio-temporal memory");
                let xs = g.chunk(&conv_x.forward(g, store, x), 7, 1);
                let hs = g.chunk(&conv_h.forward(g, store, h), 4, 1);
                let ms = g.chunk(&conv_m.forward(g, store, m), 3, 1);
                let i = g.sigmoid(&g.add(&xs[0], &hs[0]));
                let f = g.sigmoid(&g.add(&xs[1], &hs[1]));
                let gg = g.tanh(&g.add(&xs[2], &hs[2]));
                let c_new = g.add(&g.mul(&f, c), &g.mul(&i, &gg));
                let i2 = g.sigmoid(&g.add(&xs[3], &ms[0]));
                let f2 = g.sigmoid(&g.add(&xs[4], &ms[1]));
                let g2 = g.tanh(&g.add(&xs[5], &ms[2]));
                let m_new = g.add(&g.mul(&f2, m), &g.mul(&i2, &g2));
                let mem = g.concat(&[&c_new, &m_new], 1);
                let o = g.sigmoid(&g.add(&g.add(&xs[6], &hs[3]), &conv_o.forward(g, store, &mem)));
                let h_new = g.mul(&o, &g.tanh(&conv_last.forward(g, store, &mem)));
                CellOutput { h: h_new, c: c_new, m: Some(m_new) }
            }
        }
    }

    /// Advances every layer by one time step. The spatio-temporal memory climbs the
    /// stack within the step and re-enters the bottom layer at the next step.
    pub fn step<T: Float>(&self, g: &Graph<T>, store: &ParamStore<T>, x: &Var<T>, state: &HiddenState<T>) -> HiddenState<T> {
        let mut next = HiddenState { h: Vec::with_capacity(self.layers()), c: Vec::with_capacity(self.layers()), m: None };
        let mut input = x.clone();
        let mut m = state.m.clone();
        for l in 0..self.layers() {
            let out = self.cell_step(g, store, l, &input, &state.h[l], &state.c[l], m.as_ref());
            input = out.h.clone();
            m = out.m;
            next.h.push(out.h);
            next.c.push(out.c);
        }
        next.m = m;
        next
    }

    /// Frame prediction from the top layer's hidden state.
    pub fn read<T: Float>(&self, g: &Graph<T>, store: &ParamStore<T>, state: &HiddenState<T>) -> Var<T> {
        self.readout.forward(g, store, state.h.last().expect("at least one layer"))
    }

    /// Consumes the `T` context frames, then feeds back its own predictions for the
    /// remaining steps. Outputs emitted while consuming context frames before the last
    /// one are discarded; the step on the last context frame yields the first prediction.
    pub fn rollout<T: Float>(&self, g: &Graph<T>, store: &ParamStore<T>, context: &Var<T>, horizon: usize) -> Var<T> {
        self.rollout_traced(g, store, context, horizon).0
    }

    /// As [`RecurrentNet::rollout`], also returning the state after every step.
    pub fn rollout_traced<T: Float>(
        &self,
        g: &Graph<T>,
        store: &ParamStore<T>,
        context: &Var<T>,
        horizon: usize,
    ) -> (Var<T>, Vec<HiddenState<T>>) {
        let s = context.shape().to_vec();
        assert_eq!(s.len(), 5, "rollout expects (B, T, C, H, W), got {s:?}");
        let (b, t, c, h, w) = (s[0], s[1], s[2], s[3], s[4]);
        assert!(t >= 1, "rollout needs at least one context frame");
        if horizon == 0 {
            let shape = vec![b, 0, c, h, w];
            return (Var::constant(if g.is_symbolic() { Tensor::meta(shape) } else { Tensor::zeros(shape) }), Vec::new());
        }
        let mut state = self.zero_state(g, b, h, w);
        let mut trace = Vec::with_capacity(t + horizon - 1);
        let mut preds: Vec<Var<T>> = Vec::with_capacity(horizon);
        for step in 0..t + horizon - 1 {
            let x = if step < t {
                let frame = g.narrow(context, 1, step, 1);
                g.reshape(&frame, &[b, c, h, w])
            } else {
                preds.last().expect("a prediction precedes free-running steps").clone()
            };
            state = self.step(g, store, &x, &state);
            trace.push(state.clone());
            if step + 1 >= t {
                preds.push(self.read(g, store, &state));
            }
        }
        let frames: Vec<Var<T>> = preds.iter().map(|p| g.reshape(p, &[b, 1, c, h, w])).collect();
        let refs: Vec<&Var<T>> = frames.iter().collect();
        (g.concat(&refs, 1), trace)
    }
}
