use super::conv::set_spectral_buffer;
use super::{add_grads, missing, par_map, sum_in_order, Buffer, Param, ParamKind, Pass};
use crate::error::{Error, Result};
use crate::init::{init_classic, InitMode, InitSpec};
use crate::layers::fc::{fc_forward, FcMode, FcParams};
use crate::layers::spectral::{normalize_with_current, spectral_backward, SpectralState};
use crate::real::Real;
use crate::tensor::QTensor;
use crate::train::backprop::backward_fc;

#[derive(Debug, Clone)]
struct Cache<T> {
    inputs: Vec<QTensor<T>>,
    params: FcParams<T>,
    normalized: Option<QTensor<T>>,
    spectral: Option<SpectralState<T>>,
}

/// Fully connected layer over the whole input tensor, output `[units]`.
#[derive(Debug, Clone)]
pub struct FcLayer<T> {
    mode: FcMode,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
    params: Vec<Param<T>>,
    spectral: Option<SpectralState<T>>,
    cache: Option<Cache<T>>,
}

impl<T: Real> FcLayer<T> {
    pub fn new(
        units: usize,
        mode: FcMode,
        init: InitMode,
        spectral: Option<usize>,
        in_shape: &[usize],
        seed: u64,
    ) -> Result<Self> {
        if units == 0 {
            return Err(Error::invalid("fully connected layer needs at least one unit"));
        }
        if init == InitMode::GeometricUniform {
            return Err(Error::invalid("fully connected layers use a quaternion initialization"));
        }
        let fan_in: usize = in_shape.iter().product();
        let mut wshape = vec![units];
        wshape.extend_from_slice(in_shape);
        let w = init_classic::<T>(&InitSpec::new(init, fan_in, units, seed), units * fan_in)?;
        let params = vec![
            Param::new("weights", ParamKind::Quaternion, QTensor::from_quaternions(&wshape, &w)?),
            Param::new("bias", ParamKind::Quaternion, QTensor::zeros(&[units])),
        ];
        let spectral = match spectral {
            None => None,
            Some(iters) => {
                if mode != FcMode::Classic {
                    return Err(Error::invalid("spectral normalization applies to classic fully connected layers only"));
                }
                Some(SpectralState::new(units, fan_in, iters, seed.wrapping_add(3))?)
            }
        };
        Ok(Self {
            mode,
            in_shape: in_shape.to_vec(),
            out_shape: vec![units],
            params,
            spectral,
            cache: None,
        })
    }

    pub fn mode(&self) -> FcMode {
        self.mode
    }

    pub fn spectral_state(&self) -> Option<&SpectralState<T>> {
        self.spectral.as_ref()
    }

    pub(crate) fn output_shape(&self) -> &[usize] {
        &self.out_shape
    }

    pub(crate) fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub(crate) fn buffers(&self) -> Vec<Buffer<T>> {
        match &self.spectral {
            None => Vec::new(),
            Some(s) => vec![
                Buffer {
                    name: "spectral_u",
                    value: QTensor::from_fn(&[s.u.len()], |i| s.u[i]),
                },
                Buffer {
                    name: "spectral_v",
                    value: QTensor::from_fn(&[s.v.len()], |i| s.v[i]),
                },
            ],
        }
    }

    pub(crate) fn set_buffer(&mut self, name: &str, value: &QTensor<T>) -> Result<()> {
        set_spectral_buffer(self.spectral.as_mut(), name, value)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub(crate) fn forward(&mut self, batch: Vec<QTensor<T>>, pass: Pass, _sig: &mut Vec<u32>) -> Result<Vec<QTensor<T>>> {
        let units = self.out_shape[0];
        let raw = &self.params[0].value;
        let (weights, normalized, state) = match &self.spectral {
            None => (raw.clone(), None, None),
            Some(s) => {
                let mut s = s.clone();
                let m = raw.clone().reshape(&[units, raw.len() / units])?;
                if pass.records() {
                    s.iterate(&m)?;
                }
                let w = normalize_with_current(&mut s, &m)?;
                (w.clone().reshape(raw.shape())?, Some(w), Some(s))
            }
        };
        let params = FcParams {
            weights,
            bias: self.params[1].value.to_quaternions(),
            mode: self.mode,
        };
        let out = par_map(&batch, |x| {
            let y = fc_forward(&params, x)?;
            QTensor::from_quaternions(&[units], &y)
        })?;
        if pass.records() {
            if let (Some(s), Some(st)) = (self.spectral.as_mut(), state.as_ref()) {
                *s = st.clone();
            }
            self.cache = Some(Cache {
                inputs: batch,
                params,
                normalized,
                spectral: state,
            });
        }
        Ok(out)
    }

    pub(crate) fn backward(&mut self, d: Vec<QTensor<T>>) -> Result<Vec<QTensor<T>>> {
        let cache = self.cache.take().ok_or_else(|| missing("fc"))?;
        if d.len() != cache.inputs.len() {
            return Err(Error::shape("error batch size does not match the cached forward pass"));
        }
        let pairs: Vec<(usize, &QTensor<T>)> = d.iter().enumerate().collect();
        let per = par_map(&pairs, |&(b, db)| {
            let (g, dx) = backward_fc(&cache.params, &cache.inputs[b], &db.to_quaternions())?;
            let bias = QTensor::from_quaternions(&[g.bias.len()], &g.bias)?;
            Ok((vec![g.weights, bias], dx))
        })?;
        let (grads, dx): (Vec<_>, Vec<_>) = per.into_iter().unzip();
        let mut grads = sum_in_order(grads)?;
        if let (Some(state), Some(w)) = (&cache.spectral, &cache.normalized) {
            let shape = grads[0].shape().to_vec();
            let g = grads[0].clone().reshape(w.shape())?;
            grads[0] = spectral_backward(state, w, &g)?.reshape(&shape)?;
        }
        add_grads(&mut self.params, &grads)?;
        debug_assert!(dx.iter().all(|t| t.shape() == self.in_shape.as_slice()));
        Ok(dx)
    }
}
