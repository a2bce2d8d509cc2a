use super::{missing, Buffer, Param, ParamKind, Pass};
use crate::error::{Error, Result};
use crate::layers::norm::{bn_backward, bn_forward, BnCache, BnKind, BnState, Mat4};
use crate::quaternion::Quaternion;
use crate::real::Real;
use crate::tensor::QTensor;

/// Batch normalization. Learnables are `gamma` (a symmetric 4×4 matrix per
/// channel for whitening, a real per channel for variance normalization) and
/// `beta`; the rotation-equivariant variant has none.
#[derive(Debug, Clone)]
pub struct NormLayer<T> {
    state: BnState<T>,
    shape: Vec<usize>,
    params: Vec<Param<T>>,
    cache: Option<BnCache<T>>,
}

fn mat_to_rows<T: Real>(m: &[Mat4<T>]) -> QTensor<T> {
    QTensor::from_fn(&[m.len(), 4], |e| Quaternion::from_array(m[e / 4][e % 4]))
}

fn rows_to_mat<T: Real>(t: &QTensor<T>) -> Vec<Mat4<T>> {
    (0..t.len() / 4)
        .map(|c| std::array::from_fn(|row| t.get(c * 4 + row).to_array()))
        .collect()
}

fn reals<T: Real>(v: &[T]) -> QTensor<T> {
    QTensor::from_fn(&[v.len()], |i| Quaternion::real(v[i]))
}

fn quats<T: Real>(v: &[Quaternion<T>]) -> QTensor<T> {
    QTensor::from_fn(&[v.len()], |i| v[i])
}

impl<T: Real> NormLayer<T> {
    pub fn new(kind: BnKind, eps: T, momentum: T, shape: &[usize]) -> Result<Self> {
        let channels = match shape.len() {
            1 | 3 => shape[shape.len() - 1],
            2 => 1,
            _ => return Err(Error::shape(format!("cannot normalize tensors of shape {shape:?}"))),
        };
        let mut state = BnState::new(kind, channels);
        state.eps = eps;
        state.momentum = momentum;
        if !(eps >= T::zero()) || !(momentum > T::zero() && momentum <= T::one()) {
            return Err(Error::invalid("normalization needs eps >= 0 and momentum in (0, 1]"));
        }
        let mut params = Vec::new();
        match kind {
            BnKind::Wqbn => params.push(Param::new("gamma", ParamKind::Symmetric, mat_to_rows(&state.gamma_matrix))),
            BnKind::Vqbn { .. } => params.push(Param::new("gamma", ParamKind::Real, reals(&state.gamma))),
            BnKind::Rqbn => {}
        }
        if kind != BnKind::Rqbn {
            params.push(Param::new("beta", ParamKind::Quaternion, quats(&state.beta)));
        }
        Ok(Self {
            state,
            shape: shape.to_vec(),
            params,
            cache: None,
        })
    }

    pub fn kind(&self) -> BnKind {
        self.state.kind
    }

    pub fn state(&self) -> &BnState<T> {
        &self.state
    }

    fn sync_params(&mut self) {
        for p in &self.params {
            match (p.name, p.kind) {
                ("gamma", ParamKind::Symmetric) => self.state.gamma_matrix = rows_to_mat(&p.value),
                ("gamma", _) => self.state.gamma = p.value.plane(0).to_vec(),
                _ => self.state.beta = p.value.to_quaternions(),
            }
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
        let s = &self.state;
        let mut out = vec![Buffer {
            name: "running_mean",
            value: quats(&s.running_mean),
        }];
        match s.kind {
            BnKind::Wqbn => out.push(Buffer {
                name: "running_cov",
                value: mat_to_rows(&s.running_cov),
            }),
            _ => out.push(Buffer {
                name: "running_var",
                value: reals(&s.running_var),
            }),
        }
        out
    }

    pub(crate) fn set_buffer(&mut self, name: &str, value: &QTensor<T>) -> Result<()> {
        let c = self.state.channels();
        let expect = if name == "running_cov" { 4 * c } else { c };
        if value.len() != expect {
            return Err(Error::shape(format!(
                "buffer {name} has {} entries, expected {expect}",
                value.len()
            )));
        }
        match (name, self.state.kind) {
            ("running_mean", _) => self.state.running_mean = value.to_quaternions(),
            ("running_cov", BnKind::Wqbn) => self.state.running_cov = rows_to_mat(value),
            ("running_var", BnKind::Vqbn { .. } | BnKind::Rqbn) => self.state.running_var = value.plane(0).to_vec(),
            _ => return Err(Error::invalid(format!("normalization layer has no buffer {name}"))),
        }
        Ok(())
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub(crate) fn forward(&mut self, batch: Vec<QTensor<T>>, pass: Pass, _sig: &mut Vec<u32>) -> Result<Vec<QTensor<T>>> {
        self.sync_params();
        if pass.probe {
            let mut scratch = self.state.clone();
            return Ok(bn_forward(&mut scratch, &batch, pass.mode)?.0);
        }
        let (out, cache) = bn_forward(&mut self.state, &batch, pass.mode)?;
        if pass.records() {
            self.cache = cache;
        }
        Ok(out)
    }

    pub(crate) fn backward(&mut self, d: Vec<QTensor<T>>) -> Result<Vec<QTensor<T>>> {
        let cache = self.cache.take().ok_or_else(|| missing("norm"))?;
        let (dx, g) = bn_backward(&self.state, &cache, &d)?;
        for p in &mut self.params {
            let grad = match (p.name, p.kind) {
                ("gamma", ParamKind::Symmetric) => mat_to_rows(&g.gamma_matrix),
                ("gamma", _) => reals(&g.gamma),
                _ => quats(&g.beta),
            };
            p.grad.add_assign(&grad)?;
        }
        Ok(dx)
    }
}
