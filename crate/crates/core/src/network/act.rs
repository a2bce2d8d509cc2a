use super::{missing, par_map, ActSpec, Buffer, Param, ParamKind, Pass};
use crate::error::{Error, Result};
use crate::layers::activation::{act_split, rerelu_threshold, rerelu_with, SplitFn};
use crate::quaternion::Quaternion;
use crate::real::Real;
use crate::tensor::QTensor;
use crate::train::backprop::{backward_activation, backward_rerelu};

#[derive(Debug, Clone)]
struct Cache<T> {
    inputs: Vec<QTensor<T>>,
    thresholds: Vec<T>,
}

/// Split activation or rotation-equivariant ReLU. PReLU keeps its slope as a
/// single real parameter `alpha`.
#[derive(Debug, Clone)]
pub struct ActLayer<T> {
    spec: ActSpec,
    shape: Vec<usize>,
    params: Vec<Param<T>>,
    cache: Option<Cache<T>>,
    /// Rotation-equivariant ReLU thresholds of the last training pass, one per
    /// sample; probes reuse them.
    frozen: Vec<T>,
}

impl<T: Real> ActLayer<T> {
    pub fn new(spec: ActSpec, shape: &[usize]) -> Self {
        let params = match spec {
            ActSpec::Split(SplitFn::PRelu(a)) => vec![Param::new(
                "alpha",
                ParamKind::Real,
                QTensor::from_fn(&[1], |_| Quaternion::real(T::of(a))),
            )],
            _ => Vec::new(),
        };
        Self {
            spec,
            shape: shape.to_vec(),
            params,
            cache: None,
            frozen: Vec::new(),
        }
    }

    pub fn spec(&self) -> ActSpec {
        self.spec
    }

    fn split_fn(&self) -> Option<SplitFn<T>> {
        match self.spec {
            ActSpec::ReRelu => None,
            ActSpec::Split(f) => Some(match f {
                SplitFn::Identity => SplitFn::Identity,
                SplitFn::Sigmoid => SplitFn::Sigmoid,
                SplitFn::Tanh => SplitFn::Tanh,
                SplitFn::HardTanh => SplitFn::HardTanh,
                SplitFn::Relu => SplitFn::Relu,
                SplitFn::LeakyRelu(a) => SplitFn::LeakyRelu(T::of(a)),
                SplitFn::PRelu(_) => SplitFn::PRelu(self.params[0].value.get(0).r),
            }),
        }
    }

    pub(crate) fn output_shape(&self) -> &[usize] {
        &self.shape
    }

    pub(crate) fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub(crate) fn buffers(&self) -> Vec<Buffer<T>> {
        Vec::new()
    }

    pub(crate) fn set_buffer(&mut self, name: &str, _value: &QTensor<T>) -> Result<()> {
        Err(Error::invalid(format!("activation layer has no buffer {name}")))
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub(crate) fn forward(&mut self, batch: Vec<QTensor<T>>, pass: Pass, sig: &mut Vec<u32>) -> Result<Vec<QTensor<T>>> {
        let (out, thresholds) = match self.split_fn() {
            Some(f) => {
                if pass.signature {
                    for x in &batch {
                        sig.extend(x.iter().flat_map(|q| q.to_array()).map(|v| u32::from(f.branch(v))));
                    }
                }
                (par_map(&batch, |x| Ok(x.map(|q| act_split(f, q))))?, Vec::new())
            }
            None => {
                let thresholds = match pass.probe {
                    true if self.frozen.len() == batch.len() => self.frozen.clone(),
                    _ => batch
                        .iter()
                        .map(|x| rerelu_threshold(&x.to_quaternions()))
                        .collect::<Result<_>>()?,
                };
                if pass.signature {
                    for (x, &c) in batch.iter().zip(&thresholds) {
                        sig.extend(x.iter().map(|q| u32::from(q.norm() < c)));
                    }
                }
                let pairs: Vec<(&QTensor<T>, T)> = batch.iter().zip(thresholds.iter().copied()).collect();
                (par_map(&pairs, |&(x, c)| Ok(x.map(|q| rerelu_with(q, c))))?, thresholds)
            }
        };
        if pass.records() {
            self.frozen.clone_from(&thresholds);
            self.cache = Some(Cache {
                inputs: batch,
                thresholds,
            });
        }
        Ok(out)
    }

    pub(crate) fn backward(&mut self, d: Vec<QTensor<T>>) -> Result<Vec<QTensor<T>>> {
        let cache = self.cache.take().ok_or_else(|| missing("act"))?;
        if d.len() != cache.inputs.len() {
            return Err(Error::shape("error batch size does not match the cached forward pass"));
        }
        let pairs: Vec<(usize, &QTensor<T>)> = d.iter().enumerate().collect();
        match self.split_fn() {
            Some(f) => {
                let per = par_map(&pairs, |&(b, db)| backward_activation(f, &cache.inputs[b], db))?;
                let mut alpha = T::zero();
                let mut dx = Vec::with_capacity(per.len());
                for (g, a) in per {
                    alpha += a;
                    dx.push(g);
                }
                if let Some(p) = self.params.first_mut() {
                    p.grad.plane_mut(0)[0] += alpha;
                }
                Ok(dx)
            }
            None => par_map(&pairs, |&(b, db)| {
                backward_rerelu(&cache.inputs[b], cache.thresholds[b], db)
            }),
        }
    }
}
