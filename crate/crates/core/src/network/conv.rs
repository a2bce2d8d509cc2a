use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{add_grads, missing, par_map, sum_in_order, Buffer, Param, ParamKind, Pass};
use crate::conv::{
    kernel_count, layer_classic, layer_equivariant, layer_geometric, AxisMode, ClassicParams, Connections, ConvSpec,
    GeometricKernel, Orientation, Paradigm,
};
use crate::error::{Error, Result};
use crate::init::{init_classic, init_geometric, init_real_glorot, sample_axis, AxisSampling, InitMode, InitSpec};
use crate::layers::spectral::{normalize_with_current, spectral_backward, SpectralState};
use crate::quaternion::Quaternion;
use crate::real::Real;
use crate::tensor::QTensor;
use crate::train::backprop::{backward_classic, backward_equivariant, backward_geometric};

#[derive(Debug, Clone)]
enum Kernels<T> {
    Classic(ClassicParams<T>),
    Geometric(Vec<GeometricKernel<T>>, Option<Vec<Quaternion<T>>>),
    Equivariant(Vec<Vec<T>>),
}

#[derive(Debug, Clone)]
struct Cache<T> {
    inputs: Vec<QTensor<T>>,
    kernels: Kernels<T>,
    normalized: Option<QTensor<T>>,
    spectral: Option<SpectralState<T>>,
}

/// Convolution over `[rows, cols, channels]` maps in any paradigm and scheme.
#[derive(Debug, Clone)]
pub struct ConvLayer<T> {
    spec: ConvSpec,
    kernels: usize,
    out_shape: Vec<usize>,
    params: Vec<Param<T>>,
    spectral: Option<SpectralState<T>>,
    cache: Option<Cache<T>>,
}

fn real_tensor<T: Real>(shape: &[usize], values: &[T]) -> QTensor<T> {
    QTensor::from_fn(shape, |i| Quaternion::real(values[i]))
}

impl<T: Real> ConvLayer<T> {
    pub fn new(
        spec: ConvSpec,
        filters: usize,
        init: InitMode,
        spectral: Option<usize>,
        in_shape: &[usize],
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        let [h, w, c] = match *in_shape {
            [h, w, c] => [h, w, c],
            _ => {
                return Err(Error::shape(format!(
                    "convolution needs [rows, cols, channels] input, got {in_shape:?}"
                )))
            }
        };
        let n = kernel_count(spec.scheme, c, filters);
        let conns = Connections::new(spec.scheme, c, n)?;
        let [ho, wo] = spec.output_extent([h, w])?;
        let l = spec.kernel;
        let taps = l * l;
        let total_pairs: usize = conns.outputs.iter().map(Vec::len).sum();
        let fan_in = taps * conns.outputs[0].len();
        let fan_out = taps * total_pairs / c;
        let kshape = [n, l, l];
        let mut params = Vec::new();
        match spec.paradigm {
            Paradigm::Classic => {
                if init == InitMode::GeometricUniform {
                    return Err(Error::invalid("classic convolution needs a quaternion initialization"));
                }
                let draw = |s: u64| -> Result<QTensor<T>> {
                    let w = init_classic::<T>(&InitSpec::new(init, fan_in, fan_out, s), n * taps)?;
                    QTensor::from_quaternions(&kshape, &w)
                };
                params.push(Param::new("kernels", ParamKind::Quaternion, draw(seed)?));
                if spec.orientation == Orientation::TwoSided {
                    params.push(Param::new("right_kernels", ParamKind::Quaternion, draw(seed.wrapping_add(1))?));
                }
                params.push(Param::new("bias", ParamKind::Quaternion, QTensor::zeros(&[conns.out_channels()])));
            }
            Paradigm::Geometric | Paradigm::GeometricBiased => {
                let g = InitSpec::new(InitMode::GeometricUniform, fan_in, fan_out, seed);
                let draws = init_geometric::<T>(&g, n * taps)?;
                let scale: Vec<T> = draws.iter().map(|d| d.0).collect();
                let angle: Vec<T> = draws.iter().map(|d| d.1).collect();
                params.push(Param::new("scale", ParamKind::Real, real_tensor(&kshape, &scale)));
                params.push(Param::new("angle", ParamKind::Real, real_tensor(&kshape, &angle)));
                if spec.axis_mode == AxisMode::Learnable {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
                    let axes = QTensor::from_fn(&[n], |_| {
                        Quaternion::pure(sample_axis(&mut rng, AxisSampling::PositiveOctant).map(T::of))
                    });
                    params.push(Param::new("axis", ParamKind::Axis, axes));
                }
                if spec.paradigm == Paradigm::GeometricBiased {
                    params.push(Param::new("bias", ParamKind::Quaternion, QTensor::zeros(&[conns.out_channels()])));
                }
            }
            Paradigm::Equivariant => {
                let k = init_real_glorot::<T>(fan_in, fan_out, seed, n * taps)?;
                params.push(Param::new("kernels", ParamKind::Real, real_tensor(&kshape, &k)));
            }
        }
        let spectral = match spectral {
            None => None,
            Some(iters) => {
                if spec.paradigm != Paradigm::Classic || spec.orientation != Orientation::Left {
                    return Err(Error::invalid(
                        "spectral normalization applies to classic left-orientation convolutions only",
                    ));
                }
                Some(SpectralState::new(n, taps, iters, seed.wrapping_add(3))?)
            }
        };
        Ok(Self {
            spec,
            kernels: n,
            out_shape: vec![ho, wo, conns.out_channels()],
            params,
            spectral,
            cache: None,
        })
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
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

    fn param(&self, name: &str) -> Option<&QTensor<T>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
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

    /// Kernels as used by the forward pass, with spectral normalization applied.
    fn kernels(&self, pass: Pass) -> Result<(Kernels<T>, Option<QTensor<T>>, Option<SpectralState<T>>)> {
        let l = self.spec.kernel;
        let taps = l * l;
        let n = self.kernels;
        Ok(match self.spec.paradigm {
            Paradigm::Classic => {
                let raw = self.param("kernels").expect("classic kernels").clone();
                let (kernels, normalized, state) = match &self.spectral {
                    None => (raw, None, None),
                    Some(s) => {
                        let mut s = s.clone();
                        let m = raw.reshape(&[n, taps])?;
                        if pass.records() {
                            s.iterate(&m)?;
                        }
                        let w = normalize_with_current(&mut s, &m)?;
                        (w.clone().reshape(&[n, l, l])?, Some(w), Some(s))
                    }
                };
                let bias = self.param("bias").expect("classic bias").to_quaternions();
                let k = Kernels::Classic(ClassicParams {
                    kernels,
                    right_kernels: self.param("right_kernels").cloned(),
                    bias,
                });
                (k, normalized, state)
            }
            Paradigm::Geometric | Paradigm::GeometricBiased => {
                let scale = self.param("scale").expect("geometric scale").plane(0).to_vec();
                let angle = self.param("angle").expect("geometric angle").plane(0).to_vec();
                let axes = self.param("axis");
                let ks = (0..n)
                    .map(|k| GeometricKernel {
                        scale: scale[k * taps..(k + 1) * taps].to_vec(),
                        angle: angle[k * taps..(k + 1) * taps].to_vec(),
                        axis: match (self.spec.axis_mode, axes) {
                            (AxisMode::Fixed(a), _) => a.map(T::of),
                            (AxisMode::Learnable, Some(t)) => t.get(k).imag(),
                            (AxisMode::Learnable, None) => unreachable!("learnable axis without parameter"),
                        },
                    })
                    .collect();
                let bias = self.param("bias").map(QTensor::to_quaternions);
                (Kernels::Geometric(ks, bias), None, None)
            }
            Paradigm::Equivariant => {
                let k = self.param("kernels").expect("equivariant kernels").plane(0);
                let ks = (0..n).map(|t| k[t * taps..(t + 1) * taps].to_vec()).collect();
                (Kernels::Equivariant(ks), None, None)
            }
        })
    }

    pub(crate) fn forward(&mut self, batch: Vec<QTensor<T>>, pass: Pass, _sig: &mut Vec<u32>) -> Result<Vec<QTensor<T>>> {
        let (kernels, normalized, state) = self.kernels(pass)?;
        let spec = &self.spec;
        let out = par_map(&batch, |x| match &kernels {
            Kernels::Classic(p) => layer_classic(p, x, spec),
            Kernels::Geometric(k, b) => layer_geometric(k, b.as_deref(), x, spec),
            Kernels::Equivariant(k) => layer_equivariant(k, x, spec),
        })?;
        if pass.records() {
            if let (Some(s), Some(st)) = (self.spectral.as_mut(), state.as_ref()) {
                *s = st.clone();
            }
            self.cache = Some(Cache {
                inputs: batch,
                kernels,
                normalized,
                spectral: state,
            });
        }
        Ok(out)
    }

    pub(crate) fn backward(&mut self, d: Vec<QTensor<T>>) -> Result<Vec<QTensor<T>>> {
        let cache = self.cache.take().ok_or_else(|| missing("conv"))?;
        if d.len() != cache.inputs.len() {
            return Err(Error::shape("error batch size does not match the cached forward pass"));
        }
        let spec = &self.spec;
        let pairs: Vec<(usize, &QTensor<T>)> = d.iter().enumerate().collect();
        let per: Vec<(Vec<QTensor<T>>, QTensor<T>)> = par_map(&pairs, |&(b, db)| {
            let x = &cache.inputs[b];
            match &cache.kernels {
                Kernels::Classic(p) => {
                    let (g, dx) = backward_classic(p, x, db, spec)?;
                    let mut grads = vec![g.kernels];
                    grads.extend(g.right_kernels);
                    grads.push(QTensor::from_quaternions(&[g.bias.len()], &g.bias)?);
                    Ok((grads, dx))
                }
                Kernels::Geometric(k, bias) => {
                    let (g, gb, dx) = backward_geometric(k, bias.is_some(), x, db, spec)?;
                    let shape = [k.len(), spec.kernel, spec.kernel];
                    let scale: Vec<T> = g.iter().flat_map(|k| k.scale.iter().copied()).collect();
                    let angle: Vec<T> = g.iter().flat_map(|k| k.angle.iter().copied()).collect();
                    let mut grads = vec![real_tensor(&shape, &scale), real_tensor(&shape, &angle)];
                    if spec.axis_mode == AxisMode::Learnable {
                        grads.push(QTensor::from_fn(&[k.len()], |t| Quaternion::pure(g[t].axis)));
                    }
                    if let Some(b) = gb {
                        grads.push(QTensor::from_quaternions(&[b.len()], &b)?);
                    }
                    Ok((grads, dx))
                }
                Kernels::Equivariant(k) => {
                    let (g, dx) = backward_equivariant(k, x, db, spec)?;
                    let flat: Vec<T> = g.into_iter().flatten().collect();
                    Ok((vec![real_tensor(&[k.len(), spec.kernel, spec.kernel], &flat)], dx))
                }
            }
        })?;
        let (grads, dx): (Vec<_>, Vec<_>) = per.into_iter().unzip();
        let mut grads = sum_in_order(grads)?;
        if let (Some(state), Some(w)) = (&cache.spectral, &cache.normalized) {
            let l = self.spec.kernel;
            let g = grads[0].clone().reshape(w.shape())?;
            grads[0] = spectral_backward(state, w, &g)?.reshape(&[self.kernels, l, l])?;
        }
        add_grads(&mut self.params, &grads)?;
        Ok(dx)
    }
}

pub(super) fn set_spectral_buffer<T: Real>(
    state: Option<&mut SpectralState<T>>,
    name: &str,
    value: &QTensor<T>,
) -> Result<()> {
    let s = state.ok_or_else(|| Error::invalid(format!("layer has no buffer {name}")))?;
    let target = match name {
        "spectral_u" => &mut s.u,
        "spectral_v" => &mut s.v,
        _ => return Err(Error::invalid(format!("unknown buffer {name}"))),
    };
    if target.len() != value.len() {
        return Err(Error::shape(format!(
            "buffer {name} has {} entries, expected {}",
            value.len(),
            target.len()
        )));
    }
    *target = value.to_quaternions();
    Ok(())
}
