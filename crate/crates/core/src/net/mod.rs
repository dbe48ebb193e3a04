//! Layers, models and architecture presets.

pub mod layers;

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::charting::{ChartError, PatchOperator};
use layers::GcShape;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("filter bins {filter:?} do not match patch operator bins {operator:?}")]
    BinMismatch {
        filter: (usize, usize),
        operator: (usize, usize),
    },
    #[error("layer {layer} needs a patch operator")]
    MissingPatchOperator { layer: usize },
    #[error("layer {layer} needs vertex areas")]
    MissingAreas { layer: usize },
    #[error("activation does not come from the current parameters")]
    StaleActivation,
    #[error("invalid layer specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Chart(#[from] ChartError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Lin { bias: bool },
    Relu,
    Gc { n_rho: usize, n_theta: usize },
    Amp { n_rot: usize },
    Ftm { n_rho: usize, n_theta: usize, kept: usize },
    Cov,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LayerSpec {
    /// Spec for a layer of `kind` fed with `in_dim` features. `width` is the
    /// number of output channels for LIN and GC and ignored otherwise.
    pub fn chain(kind: LayerKind, in_dim: usize, width: usize) -> Result<Self, NetError> {
        let out_dim = match kind {
            LayerKind::Lin { .. } => width,
            LayerKind::Relu | LayerKind::Softmax => in_dim,
            LayerKind::Gc { n_rho, n_theta } => {
                if n_rho == 0 || n_theta == 0 {
                    return Err(NetError::InvalidSpec("GC needs at least one bin".into()));
                }
                n_theta * width
            }
            LayerKind::Amp { n_rot } => {
                if n_rot == 0 || in_dim % n_rot != 0 {
                    return Err(NetError::InvalidSpec(format!("AMP over {n_rot} rotations of {in_dim} features")));
                }
                in_dim / n_rot
            }
            LayerKind::Ftm { n_rho, n_theta, kept } => {
                if kept == 0 || kept > layers::ftm_max_frequencies(n_theta) || n_rho == 0 {
                    return Err(NetError::InvalidSpec(format!("FTM keeping {kept} of {n_theta} angular bins")));
                }
                n_rho * kept * in_dim
            }
            LayerKind::Cov => in_dim * in_dim,
        };
        if out_dim == 0 || in_dim == 0 {
            return Err(NetError::InvalidSpec(format!("{kind:?} with zero width")));
        }
        Ok(Self { kind, in_dim, out_dim })
    }

    /// Learnable scalars owned by this layer.
    pub fn parameter_count(&self) -> usize {
        match self.kind {
            LayerKind::Lin { bias } => self.out_dim * self.in_dim + if bias { self.out_dim } else { 0 },
            LayerKind::Gc { n_rho, n_theta } => self.gc_shape(n_rho, n_theta).len(),
            _ => 0,
        }
    }

    fn gc_shape(&self, n_rho: usize, n_theta: usize) -> GcShape {
        GcShape {
            q: self.out_dim / n_theta,
            p: self.in_dim,
            n_rho,
            n_theta,
        }
    }

    fn fans(&self) -> (usize, usize) {
        match self.kind {
            LayerKind::Gc { n_rho, n_theta } => {
                let bins = n_rho * n_theta;
                (self.in_dim * bins, self.out_dim / n_theta * bins)
            }
            _ => (self.in_dim, self.out_dim),
        }
    }

    /// Whether the layer needs a patch operator from the shape context.
    pub fn uses_patches(&self) -> bool {
        matches!(self.kind, LayerKind::Gc { .. } | LayerKind::Ftm { .. })
    }
}

/// All learnable scalars in layer order, with each layer's `(offset, len)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    values: Vec<f64>,
    ranges: Vec<(usize, usize)>,
}

impl ParameterSet {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn range(&self, layer: usize) -> (usize, usize) {
        self.ranges[layer]
    }

    pub fn layer(&self, layer: usize) -> &[f64] {
        let (o, l) = self.ranges[layer];
        &self.values[o..o + l]
    }
}

/// Per-shape data the layers may need.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShapeContext<'a> {
    pub patches: Option<&'a PatchOperator>,
    pub areas: Option<&'a [f64]>,
}

impl<'a> ShapeContext<'a> {
    pub fn new(patches: &'a PatchOperator, areas: &'a [f64]) -> Self {
        Self {
            patches: Some(patches),
            areas: Some(areas),
        }
    }
}

static NEXT_TOKEN: AtomicU64 = AtomicU64::new(1);

fn fresh_token() -> u64 {
    NEXT_TOKEN.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone)]
enum Cache {
    None,
    Patches(Array2<f64>),
    Argmax(Vec<u32>),
    Output(Array2<f64>),
}

/// Forward-pass state consumed by [`Model::backward`].
#[derive(Debug, Clone)]
pub struct Activation {
    token: u64,
    inputs: Vec<Array2<f64>>,
    caches: Vec<Cache>,
}

impl Activation {
    /// Number of layers the forward pass went through.
    pub fn depth(&self) -> usize {
        self.inputs.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_dim: usize,
    layers: Vec<LayerSpec>,
    params: ParameterSet,
    token: u64,
}

impl Model {
    /// Validates dimension chaining and the parameter count.
    pub fn from_parts(input_dim: usize, layers: Vec<LayerSpec>, values: Vec<f64>) -> Result<Self, NetError> {
        let mut dim = input_dim;
        let mut ranges = Vec::with_capacity(layers.len());
        let mut offset = 0;
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim != dim {
                return Err(NetError::InvalidSpec(format!("layer {i} expects {} inputs, gets {dim}", l.in_dim)));
            }
            let width = match l.kind {
                LayerKind::Gc { n_theta, .. } if n_theta > 0 => l.out_dim / n_theta,
                _ => l.out_dim,
            };
            if LayerSpec::chain(l.kind, l.in_dim, width)? != *l {
                return Err(NetError::InvalidSpec(format!("layer {i} has inconsistent dimensions")));
            }
            let len = l.parameter_count();
            ranges.push((offset, len));
            offset += len;
            dim = l.out_dim;
        }
        if values.len() != offset {
            return Err(NetError::DimensionMismatch {
                expected: offset,
                found: values.len(),
            });
        }
        Ok(Self {
            input_dim,
            layers,
            params: ParameterSet { values, ranges },
            token: fresh_token(),
        })
    }

    /// Uniform `±√(6/(fan_in + fan_out))` weights, zero biases.
    pub fn initialized(input_dim: usize, layers: Vec<LayerSpec>, seed: u64) -> Result<Self, NetError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::new();
        for l in &layers {
            let (fan_in, fan_out) = l.fans();
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = match l.kind {
                LayerKind::Lin { .. } => l.out_dim * l.in_dim,
                _ => l.parameter_count(),
            };
            values.extend((0..weights).map(|_| rng.gen_range(-bound..=bound)));
            values.extend(std::iter::repeat(0.0).take(l.parameter_count() - weights));
        }
        Self::from_parts(input_dim, layers, values)
    }

    pub fn identity(input_dim: usize) -> Self {
        Self::from_parts(input_dim, Vec::new(), Vec::new()).expect("empty model")
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.out_dim)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn parameters(&self) -> &ParameterSet {
        &self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    /// Mutable access to all parameters; invalidates earlier activations.
    pub fn parameters_mut(&mut self) -> &mut [f64] {
        self.token = fresh_token();
        &mut self.params.values
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<(), NetError> {
        if values.len() != self.params.len() {
            return Err(NetError::DimensionMismatch {
                expected: self.params.len(),
                found: values.len(),
            });
        }
        self.parameters_mut().copy_from_slice(values);
        Ok(())
    }

    pub fn needs_patches(&self) -> bool {
        self.layers.iter().any(LayerSpec::uses_patches)
    }

    /// Number of layers before a trailing softmax (all layers if none).
    pub fn logit_depth(&self) -> usize {
        match self.layers.last() {
            Some(l) if l.kind == LayerKind::Softmax => self.layers.len() - 1,
            _ => self.layers.len(),
        }
    }

    /// Full forward pass.
    pub fn forward(&self, input: ArrayView2<f64>, ctx: &ShapeContext) -> Result<(Array2<f64>, Activation), NetError> {
        self.forward_to(input, ctx, self.layers.len())
    }

    /// Forward pass through the first `depth` layers.
    pub fn forward_to(
        &self,
        input: ArrayView2<f64>,
        ctx: &ShapeContext,
        depth: usize,
    ) -> Result<(Array2<f64>, Activation), NetError> {
        assert!(depth <= self.layers.len(), "depth {depth} beyond {} layers", self.layers.len());
        if input.ncols() != self.input_dim {
            return Err(NetError::DimensionMismatch {
                expected: self.input_dim,
                found: input.ncols(),
            });
        }
        let mut x = input.to_owned();
        let mut inputs = Vec::with_capacity(depth);
        let mut caches = Vec::with_capacity(depth);
        for (i, l) in self.layers[..depth].iter().enumerate() {
            let w = self.params.layer(i);
            let (y, cache) = match l.kind {
                LayerKind::Lin { bias } => {
                    let (wm, b) = lin_parts(l, w, bias);
                    (layers::lin_forward(x.view(), wm, b)?, Cache::None)
                }
                LayerKind::Relu => (layers::relu_forward(x.view()), Cache::None),
                LayerKind::Gc { n_rho, n_theta } => {
                    let op = ctx.patches.ok_or(NetError::MissingPatchOperator { layer: i })?;
                    let (y, p) = layers::gc_forward(x.view(), w, l.gc_shape(n_rho, n_theta), op)?;
                    (y, Cache::Patches(p))
                }
                LayerKind::Amp { n_rot } => {
                    let (y, arg) = layers::amp_forward(x.view(), n_rot)?;
                    (y, Cache::Argmax(arg))
                }
                LayerKind::Ftm { n_rho, n_theta, kept } => {
                    let op = ctx.patches.ok_or(NetError::MissingPatchOperator { layer: i })?;
                    if (op.n_rho(), op.n_theta()) != (n_rho, n_theta) {
                        return Err(NetError::BinMismatch {
                            filter: (n_rho, n_theta),
                            operator: (op.n_rho(), op.n_theta()),
                        });
                    }
                    let (y, p) = layers::ftm_forward(x.view(), op, kept)?;
                    (y, Cache::Patches(p))
                }
                LayerKind::Cov => {
                    let a = ctx.areas.ok_or(NetError::MissingAreas { layer: i })?;
                    (layers::cov_forward(x.view(), a)?, Cache::None)
                }
                LayerKind::Softmax => {
                    let y = layers::softmax_forward(x.view());
                    (y.clone(), Cache::Output(y))
                }
            };
            inputs.push(std::mem::replace(&mut x, y));
            caches.push(cache);
        }
        Ok((
            x,
            Activation {
                token: self.token,
                inputs,
                caches,
            },
        ))
    }

    /// Reverse-mode pass from the gradient of the activation's output.
    pub fn backward(&self, act: &Activation, output_grad: ArrayView2<f64>, ctx: &ShapeContext) -> Result<Gradients, NetError> {
        if act.token != self.token {
            return Err(NetError::StaleActivation);
        }
        let mut pgrad = vec![0.0; self.params.len()];
        let mut g = output_grad.to_owned();
        for i in (0..act.depth()).rev() {
            let l = &self.layers[i];
            let x = act.inputs[i].view();
            let w = self.params.layer(i);
            let (offset, _) = self.params.range(i);
            g = match (l.kind, &act.caches[i]) {
                (LayerKind::Lin { bias }, _) => {
                    let (wm, _) = lin_parts(l, w, bias);
                    let (dx, dw, db) = layers::lin_backward(x, wm, g.view());
                    let nw = l.in_dim * l.out_dim;
                    pgrad[offset..offset + nw].copy_from_slice(dw.as_standard_layout().as_slice().expect("contiguous"));
                    if bias {
                        pgrad[offset + nw..offset + nw + l.out_dim].copy_from_slice(&db);
                    }
                    dx
                }
                (LayerKind::Relu, _) => layers::relu_backward(x, g.view()),
                (LayerKind::Gc { n_rho, n_theta }, Cache::Patches(p)) => {
                    let op = ctx.patches.ok_or(NetError::MissingPatchOperator { layer: i })?;
                    let (dx, df) = layers::gc_backward(p.view(), w, l.gc_shape(n_rho, n_theta), op, g.view())?;
                    pgrad[offset..offset + df.len()].copy_from_slice(&df);
                    dx
                }
                (LayerKind::Amp { n_rot }, Cache::Argmax(arg)) => layers::amp_backward(arg, n_rot, g.view()),
                (LayerKind::Ftm { kept, .. }, Cache::Patches(p)) => {
                    let op = ctx.patches.ok_or(NetError::MissingPatchOperator { layer: i })?;
                    layers::ftm_backward(p.view(), op, l.in_dim, kept, g.view())?
                }
                (LayerKind::Cov, _) => {
                    let a = ctx.areas.ok_or(NetError::MissingAreas { layer: i })?;
                    layers::cov_backward(x, a, g.view())?
                }
                (LayerKind::Softmax, Cache::Output(y)) => layers::softmax_backward(y.view(), g.view()),
                _ => unreachable!("cache kind matches layer kind"),
            };
        }
        Ok(Gradients { params: pgrad, input: g })
    }
}

fn lin_parts<'a>(l: &LayerSpec, w: &'a [f64], bias: bool) -> (ArrayView2<'a, f64>, Option<&'a [f64]>) {
    let nw = l.in_dim * l.out_dim;
    let wm = ArrayView2::from_shape((l.out_dim, l.in_dim), &w[..nw]).expect("weight block");
    (wm, bias.then(|| &w[nw..nw + l.out_dim]))
}

/// Incremental construction of a layer chain.
#[derive(Debug)]
pub struct ModelBuilder {
    input_dim: usize,
    layers: Vec<LayerSpec>,
    last_rotations: Option<usize>,
    error: Option<NetError>,
}

impl ModelBuilder {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            layers: Vec::new(),
            last_rotations: None,
            error: None,
        }
    }

    fn dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.out_dim)
    }

    fn push(mut self, kind: LayerKind, width: usize) -> Self {
        if self.error.is_none() {
            match LayerSpec::chain(kind, self.dim(), width) {
                Ok(l) => self.layers.push(l),
                Err(e) => self.error = Some(e),
            }
        }
        self
    }

    pub fn lin(self, width: usize, bias: bool) -> Self {
        self.push(LayerKind::Lin { bias }, width)
    }

    pub fn relu(self) -> Self {
        self.push(LayerKind::Relu, 0)
    }

    pub fn gc(mut self, width: usize, n_rho: usize, n_theta: usize) -> Self {
        self.last_rotations = Some(n_theta);
        self.push(LayerKind::Gc { n_rho, n_theta }, width)
    }

    /// Max over the rotations of the most recent GC layer.
    pub fn amp(self) -> Self {
        match self.last_rotations {
            Some(n_rot) => self.push(LayerKind::Amp { n_rot }, 0),
            None => {
                let mut s = self;
                s.error.get_or_insert(NetError::InvalidSpec("AMP without a preceding GC layer".into()));
                s
            }
        }
    }

    pub fn ftm(self, n_rho: usize, n_theta: usize, kept: usize) -> Self {
        self.push(LayerKind::Ftm { n_rho, n_theta, kept }, 0)
    }

    pub fn cov(self) -> Self {
        self.push(LayerKind::Cov, 0)
    }

    pub fn softmax(self) -> Self {
        self.push(LayerKind::Softmax, 0)
    }

    pub fn specs(self) -> Result<(usize, Vec<LayerSpec>), NetError> {
        match self.error {
            Some(e) => Err(e),
            None => Ok((self.input_dim, self.layers)),
        }
    }

    pub fn build(self, seed: u64) -> Result<Model, NetError> {
        let (input_dim, layers) = self.specs()?;
        Model::initialized(input_dim, layers, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Gcnn1,
    Gcnn2,
    Gcnn3,
    Retrieval,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Gcnn1 => "gcnn1",
            Preset::Gcnn2 => "gcnn2",
            Preset::Gcnn3 => "gcnn3",
            Preset::Retrieval => "retrieval",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Preset::Gcnn1, Preset::Gcnn2, Preset::Gcnn3, Preset::Retrieval]
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(name))
    }

    /// Layer chain for `input_dim` features. `classes` is the size of the
    /// correspondence head (GCNN3 only).
    pub fn builder(&self, input_dim: usize, n_rho: usize, n_theta: usize, classes: usize) -> ModelBuilder {
        let b = ModelBuilder::new(input_dim);
        match self {
            Preset::Gcnn1 => b.lin(16, false).relu().gc(16, n_rho, n_theta).amp(),
            Preset::Gcnn2 => Preset::Gcnn1
                .builder(input_dim, n_rho, n_theta, classes)
                .relu()
                .ftm(n_rho, n_theta, layers::ftm_max_frequencies(n_theta))
                .lin(16, false),
            Preset::Gcnn3 => b
                .lin(16, false)
                .relu()
                .gc(32, n_rho, n_theta)
                .amp()
                .relu()
                .gc(64, n_rho, n_theta)
                .amp()
                .relu()
                .gc(128, n_rho, n_theta)
                .amp()
                .relu()
                .lin(256, false)
                .lin(classes, false)
                .softmax(),
            Preset::Retrieval => b.lin(8, false).gc(8, n_rho, n_theta).amp().cov(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_model_passes_through() {
        let m = Model::identity(3);
        let x = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let (y, act) = m.forward(x.view(), &ShapeContext::default()).unwrap();
        assert_eq!(y, x);
        let g = m.backward(&act, x.view(), &ShapeContext::default()).unwrap();
        assert_eq!(g.input, x);
        assert!(g.params.is_empty());
    }

    #[test]
    fn parameters_are_counted_and_seeded() {
        let a = Preset::Gcnn1.builder(150, 5, 16, 0).build(7).unwrap();
        assert_eq!(a.parameter_count(), 16 * 150 + 16 * 16 * 5 * 16);
        assert_eq!(a.output_dim(), 16);
        let b = Preset::Gcnn1.builder(150, 5, 16, 0).build(7).unwrap();
        assert_eq!(a.parameters().values(), b.parameters().values());
        let c = Preset::Gcnn1.builder(150, 5, 16, 0).build(8).unwrap();
        assert_ne!(a.parameters().values(), c.parameters().values());
    }

    #[test]
    fn preset_output_dims() {
        assert_eq!(Preset::Gcnn2.builder(150, 5, 16, 0).build(0).unwrap().output_dim(), 16);
        assert_eq!(Preset::Gcnn3.builder(150, 5, 16, 6890).build(0).unwrap().output_dim(), 6890);
        assert_eq!(Preset::Retrieval.builder(16, 5, 16, 0).build(0).unwrap().output_dim(), 64);
    }

    #[test]
    fn stale_activation_is_rejected() {
        let mut m = ModelBuilder::new(2).lin(2, true).build(1).unwrap();
        let x = array![[1.0, 2.0]];
        let (_, act) = m.forward(x.view(), &ShapeContext::default()).unwrap();
        m.parameters_mut()[0] += 1.0;
        assert_eq!(
            m.backward(&act, x.view(), &ShapeContext::default()).unwrap_err(),
            NetError::StaleActivation
        );
    }

    #[test]
    fn amp_needs_gc() {
        assert!(ModelBuilder::new(3).amp().build(0).is_err());
    }

    #[test]
    fn gc_without_operator_fails() {
        let m = ModelBuilder::new(1).gc(1, 2, 4).build(0).unwrap();
        let err = m.forward(array![[1.0]].view(), &ShapeContext::default()).unwrap_err();
        assert_eq!(err, NetError::MissingPatchOperator { layer: 0 });
    }
}
