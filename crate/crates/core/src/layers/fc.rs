//! Fully connected quaternion layers.

use crate::error::{Error, Result};
use crate::quaternion::Quaternion;
use crate::real::Real;
use crate::tensor::QTensor;

/// Floor on `‖w‖` in the geometric layer.
pub const NORM_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcMode {
    Classic,
    Geometric,
}

/// Weights are `[units, ..input_shape]`: one full copy of the input shape per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct FcParams<T> {
    pub weights: QTensor<T>,
    pub bias: Vec<Quaternion<T>>,
    pub mode: FcMode,
}

impl<T: Real> FcParams<T> {
    pub fn units(&self) -> usize {
        self.weights.shape().first().copied().unwrap_or(0)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.weights.shape()[1..]
    }

    fn check(&self, x: &QTensor<T>) -> Result<usize> {
        if self.weights.rank() < 2 {
            return Err(Error::shape("weights need a unit axis plus the input shape"));
        }
        if self.input_shape() != x.shape() {
            return Err(Error::shape(format!(
                "input shape {:?} does not match weight shape {:?}",
                x.shape(),
                self.input_shape()
            )));
        }
        if self.bias.len() != self.units() {
            return Err(Error::shape(format!(
                "{} biases for {} units",
                self.bias.len(),
                self.units()
            )));
        }
        Ok(x.len())
    }
}

pub(crate) fn clamped_norm<T: Real>(w: Quaternion<T>) -> (T, bool) {
    let n = w.norm();
    let floor = T::of(NORM_FLOOR);
    if n < floor {
        (floor, true)
    } else {
        (n, false)
    }
}

/// `f_u = Σ_n w_un x_n + b_u`.
pub fn fc_classic<T: Real>(params: &FcParams<T>, x: &QTensor<T>) -> Result<Vec<Quaternion<T>>> {
    let n = params.check(x)?;
    Ok((0..params.units())
        .map(|u| {
            let mut acc = params.bias[u];
            for i in 0..n {
                acc += params.weights.get(u * n + i) * x.get(i);
            }
            acc
        })
        .collect())
}

/// `f_u = Σ_n w_un x_n w̄_un / ‖w_un‖ + b_u`.
pub fn fc_geometric<T: Real>(params: &FcParams<T>, x: &QTensor<T>) -> Result<Vec<Quaternion<T>>> {
    let n = params.check(x)?;
    let mut clamped = 0usize;
    let out = (0..params.units())
        .map(|u| {
            let mut acc = params.bias[u];
            for i in 0..n {
                let w = params.weights.get(u * n + i);
                let (norm, c) = clamped_norm(w);
                clamped += usize::from(c);
                acc += (w * x.get(i) * w.conj()) / norm;
            }
            acc
        })
        .collect();
    if clamped > 0 {
        log::debug!("geometric fully connected: {clamped} weight norm(s) clamped to {NORM_FLOOR:e}");
    }
    Ok(out)
}

pub fn fc_forward<T: Real>(params: &FcParams<T>, x: &QTensor<T>) -> Result<Vec<Quaternion<T>>> {
    match params.mode {
        FcMode::Classic => fc_classic(params, x),
        FcMode::Geometric => fc_geometric(params, x),
    }
}
