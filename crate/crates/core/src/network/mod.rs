//! Sequential networks of quaternion layers with cached forward state and
//! layer-local backward passes.

mod act;
mod conv;
mod dense;
mod norm;
mod pool;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use act::ActLayer;
pub use conv::ConvLayer;
pub use dense::FcLayer;
pub use norm::NormLayer;
pub use pool::PoolLayer;

use crate::conv::ConvSpec;
use crate::error::{Error, Result};
use crate::init::InitMode;
use crate::layers::activation::SplitFn;
use crate::layers::fc::FcMode;
use crate::layers::norm::{BnKind, Mode};
use crate::layers::pool::Pool2d;
use crate::real::Real;
use crate::tensor::QTensor;

/// Which components of a stored parameter tensor are free.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Quaternion,
    /// Real values in the `r` plane.
    Real,
    /// Unit 3-vectors in the imaginary planes.
    Axis,
    /// A symmetric 4×4 matrix per channel, stored as four quaternion rows;
    /// only the upper triangle is free.
    Symmetric,
}

impl ParamKind {
    pub fn is_free(self, element: usize, comp: usize) -> bool {
        match self {
            ParamKind::Quaternion => true,
            ParamKind::Real => comp == 0,
            ParamKind::Axis => comp != 0,
            ParamKind::Symmetric => comp >= element % 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::Quaternion => "quaternion",
            ParamKind::Real => "real",
            ParamKind::Axis => "axis",
            ParamKind::Symmetric => "symmetric",
        }
    }
}

/// A trainable tensor and its accumulated update direction (`−∂L/∂value`).
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: &'static str,
    pub kind: ParamKind,
    pub value: QTensor<T>,
    pub grad: QTensor<T>,
}

impl<T: Real> Param<T> {
    pub fn new(name: &'static str, kind: ParamKind, value: QTensor<T>) -> Self {
        let grad = QTensor::zeros(value.shape());
        Self { name, kind, value, grad }
    }

    /// Number of free real scalars.
    pub fn free_count(&self) -> usize {
        (0..self.value.len())
            .map(|e| (0..4).filter(|&c| self.kind.is_free(e, c)).count())
            .sum()
    }
}

/// Non-trainable persistent state (running statistics, power-iteration vectors).
#[derive(Debug, Clone, PartialEq)]
pub struct Buffer<T> {
    pub name: &'static str,
    pub value: QTensor<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActSpec {
    Split(SplitFn<f64>),
    ReRelu,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv {
        conv: ConvSpec,
        filters: usize,
        init: InitMode,
        spectral: Option<usize>,
    },
    Fc {
        units: usize,
        mode: FcMode,
        init: InitMode,
        spectral: Option<usize>,
    },
    Pool(Pool2d),
    Act(ActSpec),
    Norm {
        kind: BnKind,
        eps: f64,
        momentum: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// `[rows, cols, quaternion channels]` of one sample.
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

/// How a forward pass treats layer state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Pass {
    pub mode: Mode,
    /// Training statistics, but no state or cache is written and the
    /// rotation-equivariant ReLU reuses its cached thresholds.
    pub probe: bool,
    pub signature: bool,
}

impl Pass {
    pub fn records(self) -> bool {
        self.mode == Mode::Train && !self.probe
    }
}

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv(ConvLayer<T>),
    Fc(FcLayer<T>),
    Pool(PoolLayer<T>),
    Act(ActLayer<T>),
    Norm(NormLayer<T>),
}

macro_rules! each {
    ($self:expr, $l:ident => $body:expr) => {
        match $self {
            Layer::Conv($l) => $body,
            Layer::Fc($l) => $body,
            Layer::Pool($l) => $body,
            Layer::Act($l) => $body,
            Layer::Norm($l) => $body,
        }
    };
}

impl<T: Real> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::Fc(_) => "fc",
            Layer::Pool(_) => "pool",
            Layer::Act(_) => "act",
            Layer::Norm(_) => "norm",
        }
    }

    pub fn output_shape(&self) -> &[usize] {
        each!(self, l => l.output_shape())
    }

    pub fn params(&self) -> &[Param<T>] {
        each!(self, l => l.params())
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        each!(self, l => l.params_mut())
    }

    pub fn buffers(&self) -> Vec<Buffer<T>> {
        each!(self, l => l.buffers())
    }

    pub fn set_buffer(&mut self, name: &str, value: &QTensor<T>) -> Result<()> {
        each!(self, l => l.set_buffer(name, value))
    }

    fn forward(&mut self, batch: Vec<QTensor<T>>, pass: Pass, sig: &mut Vec<u32>) -> Result<Vec<QTensor<T>>> {
        each!(self, l => l.forward(batch, pass, sig))
    }

    fn backward(&mut self, d: Vec<QTensor<T>>) -> Result<Vec<QTensor<T>>> {
        each!(self, l => l.backward(d))
    }

    fn clear_cache(&mut self) {
        each!(self, l => l.clear_cache())
    }
}

/// Bring a parameter back onto its constraint set after a step.
pub(crate) fn project_param<T: Real>(p: &mut Param<T>) {
    match p.kind {
        ParamKind::Axis => {
            for e in 0..p.value.len() {
                let q = p.value.get(e);
                let n = q.imag().iter().map(|x| *x * *x).sum::<T>().sqrt();
                if n > T::zero() {
                    p.value.set(e, crate::quaternion::Quaternion::pure(q.imag().map(|x| x / n)));
                }
            }
        }
        ParamKind::Symmetric => {
            for e in 0..p.value.len() {
                let row = e % 4;
                let base = e - row;
                for col in 0..row {
                    let v = p.value.get(base + col).component(row);
                    p.value.plane_mut(col)[e] = v;
                }
            }
        }
        ParamKind::Quaternion | ParamKind::Real => {}
    }
}

pub(crate) fn par_map<A, R, F>(xs: &[A], f: F) -> Result<Vec<R>>
where
    A: Sync,
    R: Send,
    F: Fn(&A) -> Result<R> + Sync + Send,
{
    xs.par_iter().map(f).collect()
}

/// Sum per-sample gradient lists in sample order.
pub(crate) fn sum_in_order<T: Real>(per_sample: Vec<Vec<QTensor<T>>>) -> Result<Vec<QTensor<T>>> {
    let mut it = per_sample.into_iter();
    let mut acc = it.next().unwrap_or_default();
    for g in it {
        for (a, b) in acc.iter_mut().zip(&g) {
            a.add_assign(b)?;
        }
    }
    Ok(acc)
}

pub(crate) fn add_grads<T: Real>(params: &mut [Param<T>], grads: &[QTensor<T>]) -> Result<()> {
    for (p, g) in params.iter_mut().zip(grads) {
        p.grad.add_assign(g)?;
    }
    Ok(())
}

pub(crate) fn missing(layer: &str) -> Error {
    Error::MissingCache(layer.to_string())
}

/// Parameter reference with its position in the network.
#[derive(Debug, Clone, Copy)]
pub struct ParamRef<'a, T> {
    pub layer: usize,
    pub layer_kind: &'static str,
    pub param: &'a Param<T>,
}

impl<T> ParamRef<'_, T> {
    pub fn path(&self) -> String {
        format!("layer{}.{}.{}", self.layer, self.layer_kind, self.param.name)
    }
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    spec: ModelSpec,
    layers: Vec<Layer<T>>,
}

impl<T: Real> Network<T> {
    /// Build and initialize every layer. Each layer draws its own seed from a
    /// generator seeded with `seed`, so the result is a pure function of both.
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        if spec.input.contains(&0) {
            return Err(Error::shape(format!("input shape {:?} has an empty axis", spec.input)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = spec.input.to_vec();
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, ls) in spec.layers.iter().enumerate() {
            let s: u64 = rng.random();
            let layer = match ls {
                LayerSpec::Conv {
                    conv,
                    filters,
                    init,
                    spectral,
                } => Layer::Conv(ConvLayer::new(*conv, *filters, *init, *spectral, &shape, s)?),
                LayerSpec::Fc {
                    units,
                    mode,
                    init,
                    spectral,
                } => Layer::Fc(FcLayer::new(*units, *mode, *init, *spectral, &shape, s)?),
                LayerSpec::Pool(p) => Layer::Pool(PoolLayer::new(*p, &shape)?),
                LayerSpec::Act(a) => Layer::Act(ActLayer::new(*a, &shape)),
                LayerSpec::Norm { kind, eps, momentum } => {
                    Layer::Norm(NormLayer::new(*kind, T::of(*eps), T::of(*momentum), &shape)?)
                }
            };
            shape = layer.output_shape().to_vec();
            log::debug!("layer {i} ({}): output {shape:?}", layer.kind());
            layers.push(layer);
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.layers
            .last()
            .map_or(self.spec.input.to_vec(), |l| l.output_shape().to_vec())
    }

    fn check_input(&self, batch: &[QTensor<T>]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        for t in batch {
            if t.shape() != self.spec.input {
                return Err(Error::shape(format!(
                    "sample shape {:?} does not match model input {:?}",
                    t.shape(),
                    self.spec.input
                )));
            }
        }
        Ok(())
    }

    fn run(&mut self, batch: &[QTensor<T>], pass: Pass, sig: &mut Vec<u32>) -> Result<Vec<QTensor<T>>> {
        self.check_input(batch)?;
        let mut x = batch.to_vec();
        for layer in &mut self.layers {
            if !pass.probe && pass.mode == Mode::Infer {
                layer.clear_cache();
            }
            x = layer.forward(x, pass, sig)?;
        }
        Ok(x)
    }

    /// Forward a batch. Training mode uses batch statistics, advances running
    /// statistics and power iterations, and caches what backward needs.
    pub fn forward(&mut self, batch: &[QTensor<T>], mode: Mode) -> Result<Vec<QTensor<T>>> {
        let pass = Pass {
            mode,
            probe: false,
            signature: false,
        };
        self.run(batch, pass, &mut Vec::new())
    }

    /// Training-mode forward that leaves every piece of state untouched, plus
    /// the signature of its discrete decisions (activation branches, pooling
    /// choices). Used to probe the loss around the current parameters.
    pub fn probe(&mut self, batch: &[QTensor<T>]) -> Result<(Vec<QTensor<T>>, Vec<u32>)> {
        let pass = Pass {
            mode: Mode::Train,
            probe: true,
            signature: true,
        };
        let mut sig = Vec::new();
        let out = self.run(batch, pass, &mut sig)?;
        Ok((out, sig))
    }

    /// Backpropagate output errors `d = −∂L/∂output` through the cached pass,
    /// adding parameter update directions into each `Param::grad`.
    pub fn backward(&mut self, d: Vec<QTensor<T>>) -> Result<Vec<QTensor<T>>> {
        let mut d = d;
        for layer in self.layers.iter_mut().rev() {
            d = layer.backward(d)?;
        }
        Ok(d)
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            for p in l.params_mut() {
                p.grad = QTensor::zeros(p.value.shape());
            }
        }
    }

    pub fn params(&self) -> Vec<ParamRef<'_, T>> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.params().iter().map(move |p| ParamRef {
                    layer: i,
                    layer_kind: l.kind(),
                    param: p,
                })
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut().iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.param.free_count()).sum()
    }
}

#[cfg(test)]
mod tests;
