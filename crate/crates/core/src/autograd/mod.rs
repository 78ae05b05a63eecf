//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied to [`Var`]s that require a
//! gradient. Operations are methods on the graph (`g.conv2d(..)`, `g.add(..)`),
//! and each one also reports its multiply–accumulate cost to the graph's
//! [`CostLedger`], which is how the analytic FLOPs model is obtained: running a
//! model on a graph in symbolic mode computes shapes and costs without touching
//! any data.

mod conv;
mod norm;
mod ops;

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng as _;

use crate::nn::{ParamId, ParamStore};
use crate::rng::{derive_rng, Rng, SeedSpec};
use crate::tensor::{Float, Tensor};

pub use conv::ConvParams;

/// Category of a recorded operation, as seen by the cost model.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Conv,
    Dense,
    MatMul,
    Elementwise,
    Norm,
    Softmax,
    Reduce,
    /// Reshapes, permutations, slicing and concatenation: data movement only.
    View,
    /// Operation without a registered cost rule.
    Custom(String),
}

/// Multiply–accumulate totals gathered while a graph executes.
#[derive(Clone, Debug, Default)]
pub struct CostLedger {
    totals: HashMap<OpKind, u64>,
    unregistered: Vec<String>,
}

impl CostLedger {
    fn record(&mut self, kind: OpKind, macs: u64) {
        if let OpKind::Custom(name) = &kind {
            if !self.unregistered.contains(name) {
                self.unregistered.push(name.clone());
            }
        }
        *self.totals.entry(kind).or_insert(0) += macs;
    }

    pub fn total_macs(&self) -> u64 {
        self.totals
            .iter()
            .filter(|(k, _)| !matches!(k, OpKind::Custom(_)))
            .map(|(_, v)| v)
            .sum()
    }

    pub fn macs_for(&self, kind: &OpKind) -> u64 {
        self.totals.get(kind).copied().unwrap_or(0)
    }

    /// Names of operations that executed without a cost rule.
    pub fn unregistered(&self) -> &[String] {
        &self.unregistered
    }
}

/// A value flowing through a graph. Cheap to clone.
#[derive(Clone)]
pub struct Var<T> {
    value: Arc<Tensor<T>>,
    node: Option<usize>,
}

impl<T: Float> Var<T> {
    /// A value that never requires a gradient.
    pub fn constant(value: Tensor<T>) -> Self {
        Self { value: Arc::new(value), node: None }
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    pub fn node_id(&self) -> Option<usize> {
        self.node
    }

    pub fn into_tensor(self) -> Tensor<T> {
        Arc::try_unwrap(self.value).unwrap_or_else(|arc| (*arc).clone())
    }
}

impl<T: Float> std::fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(node={:?}, {:?})", self.node, self.value)
    }
}

type BackwardFn<T> = Box<dyn FnOnce(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    inputs: Vec<Option<usize>>,
    backward: Option<BackwardFn<T>>,
}

/// Execution context for one forward (and optionally backward) pass.
pub struct Graph<T: Float> {
    record: bool,
    symbolic: bool,
    training: bool,
    nodes: RefCell<Vec<Node<T>>>,
    params: RefCell<HashMap<(u64, usize), Var<T>>>,
    cost: RefCell<CostLedger>,
    rng: RefCell<Option<Rng>>,
    leaves: Cell<usize>,
}

impl<T: Float> Graph<T> {
    fn build(record: bool, symbolic: bool, training: bool, rng: Option<Rng>) -> Self {
        Self {
            record,
            symbolic,
            training,
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(HashMap::new()),
            cost: RefCell::new(CostLedger::default()),
            rng: RefCell::new(rng),
            leaves: Cell::new(0),
        }
    }

    /// Evaluation mode without gradient tracking.
    pub fn inference() -> Self {
        Self::build(false, false, false, None)
    }

    /// Evaluation mode (stochastic depth off) with gradient tracking.
    pub fn with_grad() -> Self {
        Self::build(true, false, false, None)
    }

    /// Training mode: gradients tracked, stochastic depth active and driven by `seed`.
    pub fn training(seed: SeedSpec) -> Self {
        Self::build(true, false, true, Some(derive_rng(seed)))
    }

    /// Training-mode stochastic behaviour without gradient tracking.
    pub fn stochastic(seed: SeedSpec) -> Self {
        Self::build(false, false, true, Some(derive_rng(seed)))
    }

    /// Shape and cost propagation only; no data is computed.
    pub fn symbolic() -> Self {
        Self::build(false, true, false, None)
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn is_symbolic(&self) -> bool {
        self.symbolic
    }

    pub fn records_grad(&self) -> bool {
        self.record
    }

    pub fn cost(&self) -> CostLedger {
        self.cost.borrow().clone()
    }

    /// Number of distinct leaves (parameters and tracked inputs) created so far.
    pub fn leaf_count(&self) -> usize {
        self.leaves.get()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.borrow().len()
    }

    /// A tracked input, e.g. for differentiating with respect to data.
    pub fn leaf(&self, value: Tensor<T>) -> Var<T> {
        if !self.record {
            return Var::constant(value);
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { inputs: Vec::new(), backward: None });
        self.leaves.set(self.leaves.get() + 1);
        Var { value: Arc::new(value), node: Some(nodes.len() - 1) }
    }

    /// The graph variable for a stored parameter. Repeated calls return the same variable.
    pub fn param(&self, store: &ParamStore<T>, id: ParamId) -> Var<T> {
        let key = (store.uid(), id.index());
        if let Some(v) = self.params.borrow().get(&key) {
            return v.clone();
        }
        let value = store.shared(id);
        let var = if self.record {
            let mut nodes = self.nodes.borrow_mut();
            nodes.push(Node { inputs: Vec::new(), backward: None });
            self.leaves.set(self.leaves.get() + 1);
            Var { value, node: Some(nodes.len() - 1) }
        } else {
            Var { value, node: None }
        };
        self.params.borrow_mut().insert(key, var.clone());
        var
    }

    pub(crate) fn account(&self, kind: OpKind, macs: u64) {
        self.cost.borrow_mut().record(kind, macs);
    }

    pub(crate) fn meta(&self, shape: Vec<usize>) -> Var<T> {
        Var::constant(Tensor::meta(shape))
    }

    /// Records an operation. `backward` receives the output gradient and a mask
    /// of which inputs need gradients, and returns one entry per input.
    pub(crate) fn push<F>(&self, value: Tensor<T>, inputs: &[&Var<T>], backward: F) -> Var<T>
    where
        F: FnOnce(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>> + 'static,
    {
        self.push_shared(Arc::new(value), inputs, backward)
    }

    /// As [`Graph::push`], for outputs the backward closure also needs to read.
    pub(crate) fn push_shared<F>(
        &self,
        value: Arc<Tensor<T>>,
        inputs: &[&Var<T>],
        backward: F,
    ) -> Var<T>
    where
        F: FnOnce(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>> + 'static,
    {
        let ids: Vec<Option<usize>> = inputs.iter().map(|v| v.node).collect();
        if !self.record || ids.iter().all(Option::is_none) {
            return Var { value, node: None };
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { inputs: ids, backward: Some(Box::new(backward)) });
        Var { value, node: Some(nodes.len() - 1) }
    }

    /// Draws per-sample keep decisions for stochastic depth.
    pub(crate) fn bernoulli_keep(&self, n: usize, keep: f64) -> Vec<bool> {
        let mut rng = self.rng.borrow_mut();
        let rng = rng.as_mut().expect("training graph without a random stream");
        (0..n).map(|_| rng.gen::<f64>() < keep).collect()
    }

    /// Reverse pass from a scalar. Consumes the recorded tape.
    pub fn backward(&self, loss: &Var<T>) -> Gradients<T> {
        assert_eq!(loss.value.numel(), 1, "backward requires a scalar loss");
        let root = loss.node.expect("loss does not depend on any tracked variable");
        let mut nodes = self.nodes.borrow_mut();
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[root] = Some(Tensor::full(loss.value.shape().to_vec(), T::one()));
        for id in (0..=root).rev() {
            let Some(grad) = grads[id].take() else { continue };
            let node = &mut nodes[id];
            match node.backward.take() {
                None => grads[id] = Some(grad),
                Some(f) => {
                    let needs: Vec<bool> = node.inputs.iter().map(Option::is_some).collect();
                    let inputs = node.inputs.clone();
                    let input_grads = f(&grad, &needs);
                    debug_assert_eq!(input_grads.len(), inputs.len());
                    for (input, g) in inputs.into_iter().zip(input_grads) {
                        if let (Some(i), Some(g)) = (input, g) {
                            match &mut grads[i] {
                                Some(acc) => acc.add_assign(&g),
                                slot @ None => *slot = Some(g),
                            }
                        }
                    }
                }
            }
        }
        let params = self
            .params
            .borrow()
            .iter()
            .filter_map(|(k, v)| v.node.map(|n| (*k, n)))
            .collect();
        Gradients { by_node: grads, params }
    }
}

/// Gradients of leaves after [`Graph::backward`].
pub struct Gradients<T> {
    by_node: Vec<Option<Tensor<T>>>,
    params: HashMap<(u64, usize), usize>,
}

impl<T: Float> Gradients<T> {
    pub fn wrt(&self, var: &Var<T>) -> Option<&Tensor<T>> {
        var.node.and_then(|n| self.by_node[n].as_ref())
    }

    pub fn param(&self, store: &ParamStore<T>, id: ParamId) -> Option<&Tensor<T>> {
        self.params
            .get(&(store.uid(), id.index()))
            .and_then(|&n| self.by_node[n].as_ref())
    }

    /// Gradient for every parameter of `store` in order, zeros where unused.
    pub fn collect(&self, store: &ParamStore<T>) -> Vec<Tensor<T>> {
        store
            .ids()
            .map(|id| {
                self.param(store, id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(store.get(id).shape().to_vec()))
            })
            .collect()
    }
}
