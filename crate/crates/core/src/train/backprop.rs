//! Layer-local backward rules.
//!
//! Every error signal here is `d = −∂L/∂(output)`, so parameter "updates" are
//! descent directions and a step is `w ← w + ε·update`. For the classic rules
//! this reads: weight update `d x̄`, bias update `d`, bottom error `Σ w̄ d`.

use crate::conv::{ClassicParams, Connections, ConvSpec, GeometricKernel, Orientation, TapGrid};
use crate::error::{Error, Result};
use crate::layers::activation::{rerelu_backward, SplitFn};
use crate::layers::fc::{clamped_norm, FcMode, FcParams};
use crate::quaternion::Quaternion;
use crate::real::Real;
use crate::tensor::QTensor;

type Q<T> = Quaternion<T>;

fn channel_vec<T: Real>(t: &QTensor<T>, c: usize, channels: usize) -> Vec<Q<T>> {
    (0..t.len() / channels).map(|p| t.get(p * channels + c)).collect()
}

/// Per-pair driver shared by all paradigms: calls `pair(grid, kernel, x_s, d_o, dx_s)`
/// for every connection, in output-channel order.
fn for_each_pair<T: Real>(
    x: &QTensor<T>,
    d: &QTensor<T>,
    spec: &ConvSpec,
    kernels: usize,
    mut pair: impl FnMut(&TapGrid, usize, &[Q<T>], &[Q<T>], &mut [Q<T>]),
) -> Result<QTensor<T>> {
    let [h, w, c] = x.hwc()?;
    let conns = Connections::new(spec.scheme, c, kernels)?;
    let grid = TapGrid::new(spec, [h, w])?;
    let out_shape = [grid.output[0], grid.output[1], conns.out_channels()];
    if d.shape() != out_shape {
        return Err(Error::shape(format!(
            "output error has shape {:?}, expected {out_shape:?}",
            d.shape()
        )));
    }
    let xs: Vec<Vec<Q<T>>> = (0..c).map(|s| channel_vec(x, s, c)).collect();
    let mut dxs: Vec<Vec<Q<T>>> = vec![vec![Q::zero(); h * w]; c];
    for (o, pairs) in conns.outputs.iter().enumerate() {
        let dov = channel_vec(d, o, conns.out_channels());
        for &(k, s) in pairs {
            pair(&grid, k, &xs[s], &dov, &mut dxs[s]);
        }
    }
    let mut dx = QTensor::zeros(&[h, w, c]);
    for (s, v) in dxs.iter().enumerate() {
        for (p, q) in v.iter().enumerate() {
            dx.set(p * c + s, *q);
        }
    }
    dx.reshape(x.shape())
}

fn bias_grad<T: Real>(d: &QTensor<T>) -> Result<Vec<Q<T>>> {
    let [_, _, c] = d.hwc()?;
    let mut g = vec![Q::zero(); c];
    for idx in 0..d.len() {
        g[idx % c] += d.get(idx);
    }
    Ok(g)
}

/// Classic convolution: returns `(gradients shaped like params, d_bottom)`.
pub fn backward_classic<T: Real>(
    params: &ClassicParams<T>,
    x: &QTensor<T>,
    d: &QTensor<T>,
    spec: &ConvSpec,
) -> Result<(ClassicParams<T>, QTensor<T>)> {
    let taps = spec.taps();
    let n = params.kernels.len() / taps.max(1);
    let wl = params.kernels.to_quaternions();
    let wr = params.right_kernels.as_ref().map(QTensor::to_quaternions);
    if spec.orientation == Orientation::TwoSided && wr.is_none() {
        return Err(Error::invalid("two-sided orientation needs right kernels"));
    }
    let mut gl = vec![Q::zero(); wl.len()];
    let mut gr = vec![Q::zero(); wl.len()];
    let dx = for_each_pair(x, d, spec, n, |grid, k, xs, ds, dxs| {
        let base = k * taps;
        grid.for_each(|o, t, i| {
            let (dd, xi) = (ds[o], xs[i]);
            let w = wl[base + t];
            match spec.orientation {
                Orientation::Left => {
                    gl[base + t] += dd * xi.conj();
                    dxs[i] += w.conj() * dd;
                }
                Orientation::Right => {
                    gl[base + t] += xi.conj() * dd;
                    dxs[i] += dd * w.conj();
                }
                Orientation::TwoSided => {
                    let r = wr.as_ref().expect("checked above")[base + t];
                    gl[base + t] += dd * r.conj() * xi.conj();
                    gr[base + t] += xi.conj() * w.conj() * dd;
                    dxs[i] += w.conj() * dd * r.conj();
                }
            }
        });
    })?;
    let shape = params.kernels.shape();
    Ok((
        ClassicParams {
            kernels: QTensor::from_quaternions(shape, &gl)?,
            right_kernels: match spec.orientation {
                Orientation::TwoSided => Some(QTensor::from_quaternions(shape, &gr)?),
                _ => None,
            },
            bias: bias_grad(d)?,
        },
        dx,
    ))
}

/// Geometric convolution. The kernel gradients come back in a
/// [`GeometricKernel`] whose `axis` holds the axis gradient (meaningful only
/// for learnable axes); the second element is the bias gradient if biased.
pub fn backward_geometric<T: Real>(
    kernels: &[GeometricKernel<T>],
    biased: bool,
    x: &QTensor<T>,
    d: &QTensor<T>,
    spec: &ConvSpec,
) -> Result<(Vec<GeometricKernel<T>>, Option<Vec<Q<T>>>, QTensor<T>)> {
    let taps = spec.taps();
    let half = T::of(0.5);
    struct Tap<T> {
        v: Quaternion<T>,
        dv_dtheta: Quaternion<T>,
        sin_half: T,
        kappa: T,
        dkappa: T,
    }
    let prepared: Vec<Vec<Tap<T>>> = kernels
        .iter()
        .map(|k| {
            (0..taps)
                .map(|t| {
                    let a = k.scale[t];
                    let ac = GeometricKernel::clamped_scale(a);
                    let (s, c) = (k.angle[t] * half).sin_cos();
                    let u = Q::pure(k.axis);
                    Tap {
                        v: Q::real(c) + u.scale(s),
                        dv_dtheta: (Q::real(-s) + u.scale(c)).scale(half),
                        sin_half: s,
                        kappa: a * a / ac,
                        dkappa: if ac == a { T::one() } else { T::of(2.0) * a / ac },
                    }
                })
                .collect()
        })
        .collect();
    let mut grads: Vec<GeometricKernel<T>> = kernels
        .iter()
        .map(|_| GeometricKernel {
            scale: vec![T::zero(); taps],
            angle: vec![T::zero(); taps],
            axis: [T::zero(); 3],
        })
        .collect();
    let dx = for_each_pair(x, d, spec, kernels.len(), |grid, k, xs, ds, dxs| {
        let g = &mut grads[k];
        let taps = &prepared[k];
        grid.for_each(|o, t, i| {
            let (dd, xi) = (ds[o], xs[i]);
            let tp = &taps[t];
            let v = tp.v;
            g.scale[t] += dd.dot(v * xi * v.conj()) * tp.dkappa;
            let gv = dd * v * xi.conj() + dd.conj() * v * xi;
            g.angle[t] += tp.kappa * gv.dot(tp.dv_dtheta);
            let im = gv.imag();
            let f = tp.kappa * tp.sin_half;
            for c in 0..3 {
                g.axis[c] += f * im[c];
            }
            dxs[i] += (v.conj() * dd * v).scale(tp.kappa);
        });
    })?;
    let bias = if biased { Some(bias_grad(d)?) } else { None };
    Ok((grads, bias, dx))
}

/// Equivariant convolution with real kernels: `(kernel gradients, d_bottom)`.
pub fn backward_equivariant<T: Real>(
    kernels: &[Vec<T>],
    x: &QTensor<T>,
    d: &QTensor<T>,
    spec: &ConvSpec,
) -> Result<(Vec<Vec<T>>, QTensor<T>)> {
    let taps = spec.taps();
    let mut grads = vec![vec![T::zero(); taps]; kernels.len()];
    let dx = for_each_pair(x, d, spec, kernels.len(), |grid, k, xs, ds, dxs| {
        let kern = &kernels[k];
        let g = &mut grads[k];
        grid.for_each(|o, t, i| {
            g[t] += ds[o].dot(xs[i]);
            dxs[i] += ds[o].scale(kern[t]);
        });
    })?;
    Ok((grads, dx))
}

/// Fully connected layer, either mode: `(gradients shaped like params, d_bottom)`.
pub fn backward_fc<T: Real>(params: &FcParams<T>, x: &QTensor<T>, d: &[Q<T>]) -> Result<(FcParams<T>, QTensor<T>)> {
    let units = params.units();
    if d.len() != units || params.input_shape() != x.shape() {
        return Err(Error::shape(format!(
            "fully connected backward: {} errors for {units} units, input {:?} vs {:?}",
            d.len(),
            x.shape(),
            params.input_shape()
        )));
    }
    let n = x.len();
    let mut gw = QTensor::zeros(params.weights.shape());
    let mut dx = QTensor::zeros(x.shape());
    for (u, &du) in d.iter().enumerate() {
        for i in 0..n {
            let w = params.weights.get(u * n + i);
            let xi = x.get(i);
            match params.mode {
                FcMode::Classic => {
                    gw.set(u * n + i, du * xi.conj());
                    dx.add_at(i, w.conj() * du);
                }
                FcMode::Geometric => {
                    let (g, b) = geometric_fc_terms(du, w, xi);
                    gw.set(u * n + i, g);
                    dx.add_at(i, b);
                }
            }
        }
    }
    Ok((
        FcParams {
            weights: gw,
            bias: d.to_vec(),
            mode: params.mode,
        },
        dx,
    ))
}

/// Exact descent direction and bottom error of one geometric term
/// `f = w x w̄ / ‖w‖`: `((d w x̄ + d̄ w x)/n − (d·(w x w̄))/n³ · w,  w̄ d w / n)`.
/// With `‖w‖` under the clamp floor the norm is a constant.
pub fn geometric_fc_terms<T: Real>(d: Q<T>, w: Q<T>, x: Q<T>) -> (Q<T>, Q<T>) {
    let (n, clamped) = clamped_norm(w);
    let mut g = (d * w * x.conj() + d.conj() * w * x) / n;
    if !clamped {
        let s = w * x * w.conj();
        g -= w.scale(d.dot(s) / (n * n * n));
    }
    (g, (w.conj() * d * w) / n)
}

/// The classical closed form of the geometric weight update,
/// `(1/‖w‖){ (d·(w x w̄))/‖w‖² · w − 2 d w x̄ }`. It equals the negated
/// descent direction of [`geometric_fc_terms`] when `d` and `x` are both pure,
/// and is kept for comparison only.
pub fn geometric_update_literal<T: Real>(d: Q<T>, w: Q<T>, x: Q<T>) -> Q<T> {
    let n = w.norm();
    let s = w * x * w.conj();
    (w.scale(d.dot(s) / (n * n)) - (d * w * x.conj()).scale(T::of(2.0))) / n
}

/// Split activation: `d ⊙ f′(x)`, plus `Σ d·∂f/∂α` for a parametric slope.
pub fn backward_activation<T: Real>(f: SplitFn<T>, x: &QTensor<T>, d: &QTensor<T>) -> Result<(QTensor<T>, T)> {
    if x.shape() != d.shape() {
        return Err(Error::shape("activation error and input differ in shape"));
    }
    let mut alpha = T::zero();
    let dx = QTensor::from_fn(x.shape(), |i| {
        let xi = x.get(i);
        let di = d.get(i);
        if let SplitFn::PRelu(_) = f {
            for c in 0..4 {
                if xi.component(c) <= T::zero() {
                    alpha += di.component(c) * xi.component(c);
                }
            }
        }
        di.hadamard(xi.map(|v| f.derivative(v)))
    });
    Ok((dx, alpha))
}

/// Rotation-equivariant ReLU with the threshold `c` held fixed.
pub fn backward_rerelu<T: Real>(x: &QTensor<T>, c: T, d: &QTensor<T>) -> Result<QTensor<T>> {
    if x.shape() != d.shape() {
        return Err(Error::shape("activation error and input differ in shape"));
    }
    Ok(QTensor::from_fn(x.shape(), |i| rerelu_backward(x.get(i), c, d.get(i))))
}
