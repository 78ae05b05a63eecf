//! Parameter storage and the basic layers models are assembled from.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::autograd::{ConvParams, Graph, Var};
use crate::rng::Rng;
use crate::tensor::{Float, Tensor};

static NEXT_STORE_UID: AtomicU64 = AtomicU64::new(1);

fn fresh_uid() -> u64 {
    NEXT_STORE_UID.fetch_add(1, Ordering::Relaxed)
}

/// Handle to one tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of learnable tensors.
///
/// Values are reference counted so graphs can borrow them without copying;
/// updates use copy-on-write.
pub struct ParamStore<T> {
    uid: u64,
    names: Vec<String>,
    values: Vec<Arc<Tensor<T>>>,
}

impl<T: Float> Clone for ParamStore<T> {
    fn clone(&self) -> Self {
        Self { uid: fresh_uid(), names: self.names.clone(), values: self.values.clone() }
    }
}

impl<T: Float> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        Self { uid: fresh_uid(), names: Vec::new(), values: Vec::new() }
    }

    /// Identity used by graphs to cache parameter variables.
    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name {name}");
        self.names.push(name);
        self.values.push(Arc::new(value));
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn shared(&self, id: ParamId) -> Arc<Tensor<T>> {
        self.values[id.0].clone()
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn set(&mut self, id: ParamId, value: Tensor<T>) {
        assert_eq!(value.shape(), self.values[id.0].shape(), "shape change for {}", self.names[id.0]);
        self.values[id.0] = Arc::new(value);
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of learnable scalars.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.numel()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().map(|v| v.as_ref()))
    }

    /// Same parameters in another precision, under a new identity.
    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        ParamStore {
            uid: fresh_uid(),
            names: self.names.clone(),
            values: self.values.iter().map(|v| Arc::new(v.cast())).collect(),
        }
    }
}

/// Parameter initialization schemes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Normal with the given standard deviation, resampled outside two deviations.
    TruncNormal(f64),
    /// Uniform on `±1/sqrt(fan_in)`.
    FanInUniform,
}

impl Init {
    pub fn sample<T: Float>(self, shape: Vec<usize>, fan_in: usize, rng: &mut Rng) -> Tensor<T> {
        match self {
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::ones(shape),
            Init::TruncNormal(std) => Tensor::from_fn(shape, |_| loop {
                let z: f64 = StandardNormal.sample(rng);
                if z.abs() <= 2.0 {
                    break T::of(z * std);
                }
            }),
            Init::FanInUniform => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                Tensor::from_fn(shape, |_| T::of(rng.gen_range(-bound..=bound)))
            }
        }
    }
}

/// Context handed to layer constructors.
pub struct Builder<'a, T> {
    pub store: &'a mut ParamStore<T>,
    pub rng: &'a mut Rng,
    prefix: String,
}

impl<'a, T: Float> Builder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, rng: &'a mut Rng) -> Self {
        Self { store, rng, prefix: String::new() }
    }

    /// Runs `f` with `name` appended to the parameter path.
    pub fn scope<R>(&mut self, name: impl AsRef<str>, f: impl FnOnce(&mut Builder<'_, T>) -> R) -> R {
        let prefix = if self.prefix.is_empty() {
            name.as_ref().to_string()
        } else {
            format!("{}.{}", self.prefix, name.as_ref())
        };
        let mut inner = Builder { store: &mut *self.store, rng: &mut *self.rng, prefix };
        f(&mut inner)
    }

    pub fn param(&mut self, name: &str, shape: Vec<usize>, fan_in: usize, init: Init) -> ParamId {
        let value = init.sample(shape, fan_in, self.rng);
        let path = if self.prefix.is_empty() { name.to_string() } else { format!("{}.{name}", self.prefix) };
        self.store.add(path, value)
    }
}

/// 2-D convolution layer.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub params: ConvParams,
}

#[derive(Clone, Copy, Debug)]
pub struct ConvSpec {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub params: ConvParams,
    pub bias: bool,
    pub weight_init: Init,
    pub bias_init: Init,
}

impl ConvSpec {
    pub fn new(cin: usize, cout: usize, kernel: usize) -> Self {
        Self {
            cin,
            cout,
            kernel,
            params: ConvParams::same(kernel),
            bias: true,
            weight_init: Init::TruncNormal(0.02),
            bias_init: Init::Zeros,
        }
    }

    pub fn params(mut self, params: ConvParams) -> Self {
        self.params = params;
        self
    }

    pub fn bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn init(mut self, weight: Init, bias: Init) -> Self {
        self.weight_init = weight;
        self.bias_init = bias;
        self
    }
}

impl Conv2d {
    pub fn new<T: Float>(b: &mut Builder<'_, T>, name: &str, spec: ConvSpec) -> Self {
        let ConvSpec { cin, cout, kernel, params, .. } = spec;
        assert_eq!(cin % params.groups, 0, "conv {name}: cin {cin} not divisible by groups");
        let fan_in = cin / params.groups * kernel * kernel;
        b.scope(name, |b| {
            let weight = b.param("weight", vec![cout, cin / params.groups, kernel, kernel], fan_in, spec.weight_init);
            let bias = spec.bias.then(|| b.param("bias", vec![cout], fan_in, spec.bias_init));
            Self { weight, bias, params }
        })
    }

    pub fn forward<T: Float>(&self, g: &Graph<T>, store: &ParamStore<T>, x: &Var<T>) -> Var<T> {
        let w = g.param(store, self.weight);
        let bias = self.bias.map(|b| g.param(store, b));
        g.conv2d(x, &w, bias.as_ref(), self.params)
    }
}

/// Dense layer acting on the last axis.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<T: Float>(
        b: &mut Builder<'_, T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        init: Init,
    ) -> Self {
        b.scope(name, |b| Self {
            weight: b.param("weight", vec![fan_out, fan_in], fan_in, init),
            bias: bias.then(|| b.param("bias", vec![fan_out], fan_in, Init::Zeros)),
        })
    }

    pub fn forward<T: Float>(&self, g: &Graph<T>, store: &ParamStore<T>, x: &Var<T>) -> Var<T> {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|b| g.param(store, b));
        g.linear_last(x, &w, b.as_ref())
    }
}

/// Which statistics a [`Norm`] layer normalizes over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    /// Across channels, per pixel.
    ChannelLayer,
    Group(usize),
}

#[derive(Clone, Debug)]
pub struct Norm {
    pub kind: NormKind,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Norm {
    pub fn new<T: Float>(b: &mut Builder<'_, T>, name: &str, channels: usize, kind: NormKind) -> Self {
        b.scope(name, |b| Self {
            kind,
            weight: b.param("weight", vec![channels], channels, Init::Ones),
            bias: b.param("bias", vec![channels], channels, Init::Zeros),
        })
    }

    pub fn forward<T: Float>(&self, g: &Graph<T>, store: &ParamStore<T>, x: &Var<T>) -> Var<T> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        match self.kind {
            NormKind::ChannelLayer => g.channel_layer_norm(x, &w, &b, 1e-6),
            NormKind::Group(groups) => g.group_norm(x, groups, &w, &b, 1e-5),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, SeedSpec};

    #[test]
    fn conv_layer_parameter_count() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = derive_rng(SeedSpec::new(0, 0));
        let mut b = Builder::new(&mut store, &mut rng);
        Conv2d::new(&mut b, "c", ConvSpec::new(16, 32, 3));
        Linear::new(&mut b, "fc", 10, 10, true, Init::FanInUniform);
        assert_eq!(store.num_scalars(), 9 * 16 * 32 + 32 + 110);
        assert_eq!(store.name(ParamId(0)), "c.weight");
    }

    #[test]
    fn truncated_normal_stays_within_two_std() {
        let mut rng = derive_rng(SeedSpec::new(3, 0));
        let t: Tensor<f64> = Init::TruncNormal(0.02).sample(vec![10_000], 1, &mut rng);
        assert!(t.data().iter().all(|v| v.abs() <= 0.04));
        let mean = t.sum() / 10_000.0;
        assert!(mean.abs() < 1e-3);
    }

    #[test]
    fn nested_scopes_build_dotted_paths() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = derive_rng(SeedSpec::new(0, 0));
        let mut b = Builder::new(&mut store, &mut rng);
        b.scope("enc", |b| b.scope("0", |b| Norm::new(b, "norm", 4, NormKind::Group(2))));
        assert!(store.find("enc.0.norm.weight").is_some());
    }
}
