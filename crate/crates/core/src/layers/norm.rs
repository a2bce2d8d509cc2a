//! Quaternion batch normalization: whitening (WQBN), variance (VQBN) and
//! rotation-equivariant (RQBN).
//!
//! Statistics are per quaternion channel, pooled over the batch and all
//! spatial positions. The channel axis is the last one for rank-1 and rank-3
//! tensors; a rank-2 map is a single channel.

use crate::error::{Error, Result};
use crate::quaternion::Quaternion;
use crate::real::Real;
use crate::tensor::QTensor;

pub type Mat4<T> = [[T; 4]; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Running statistics only.
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnKind {
    Wqbn,
    /// `linear_variance` divides by `√(V + ε)` instead of `√(V² + ε)`.
    Vqbn { linear_variance: bool },
    Rqbn,
}

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

/// Learnables and running statistics of one normalization layer.
/// Only the fields relevant to `kind` are used.
#[derive(Debug, Clone, PartialEq)]
pub struct BnState<T> {
    pub kind: BnKind,
    pub eps: T,
    pub momentum: T,
    /// WQBN Γ; only the upper triangle is read, mirrored.
    pub gamma_matrix: Vec<Mat4<T>>,
    /// VQBN γ.
    pub gamma: Vec<T>,
    pub beta: Vec<Quaternion<T>>,
    pub running_mean: Vec<Quaternion<T>>,
    pub running_cov: Vec<Mat4<T>>,
    /// VQBN variance or RQBN mean squared magnitude.
    pub running_var: Vec<T>,
}

impl<T: Real> BnState<T> {
    pub fn new(kind: BnKind, channels: usize) -> Self {
        Self {
            kind,
            eps: T::of(DEFAULT_EPS),
            momentum: T::of(DEFAULT_MOMENTUM),
            gamma_matrix: vec![identity(); channels],
            gamma: vec![T::one(); channels],
            beta: vec![Quaternion::zero(); channels],
            running_mean: vec![Quaternion::zero(); channels],
            running_cov: vec![identity(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.beta.len()
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps >= T::zero()) {
            return Err(Error::invalid("normalization epsilon must be >= 0"));
        }
        if !(self.momentum > T::zero() && self.momentum <= T::one()) {
            return Err(Error::invalid("normalization momentum must lie in (0, 1]"));
        }
        Ok(())
    }
}

pub fn identity<T: Real>() -> Mat4<T> {
    let mut m = [[T::zero(); 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

/// Symmetric matrix read from the upper triangle of `m`.
pub fn symmetric_upper<T: Real>(m: &Mat4<T>) -> Mat4<T> {
    let mut s = *m;
    for i in 0..4 {
        for j in 0..i {
            s[i][j] = m[j][i];
        }
    }
    s
}

fn matvec<T: Real>(m: &Mat4<T>, v: [T; 4]) -> [T; 4] {
    let mut out = [T::zero(); 4];
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..4).map(|j| m[i][j] * v[j]).sum();
    }
    out
}

fn matmul<T: Real>(a: &Mat4<T>, b: &Mat4<T>) -> Mat4<T> {
    let mut out = [[T::zero(); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn transpose<T: Real>(a: &Mat4<T>) -> Mat4<T> {
    let mut out = *a;
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = a[j][i];
        }
    }
    out
}

/// Lower-triangular `L` with `A = L Lᵀ`, or `None` if `A` is not positive definite.
pub fn cholesky4<T: Real>(a: &Mat4<T>) -> Option<Mat4<T>> {
    let mut l = [[T::zero(); 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            let s: T = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > T::zero()) {
                    return None;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Inverse of a lower-triangular matrix with nonzero diagonal.
pub fn lower_inverse<T: Real>(l: &Mat4<T>) -> Mat4<T> {
    let mut m = [[T::zero(); 4]; 4];
    for j in 0..4 {
        m[j][j] = T::one() / l[j][j];
        for i in j + 1..4 {
            let s: T = (j..i).map(|k| l[i][k] * m[k][j]).sum();
            m[i][j] = -s / l[i][i];
        }
    }
    m
}

fn layout(shape: &[usize]) -> Result<(usize, usize)> {
    match *shape {
        [u] => Ok((1, u)),
        [h, w] => Ok((h * w, 1)),
        [h, w, c] => Ok((h * w, c)),
        _ => Err(Error::shape(format!(
            "normalization expects rank 1, 2 or 3 tensors, got {shape:?}"
        ))),
    }
}

fn check_batch<T: Real>(state: &BnState<T>, batch: &[QTensor<T>]) -> Result<(usize, usize)> {
    state.validate()?;
    let first = batch
        .first()
        .ok_or_else(|| Error::invalid("normalization needs a nonempty batch"))?;
    if batch.iter().any(|t| t.shape() != first.shape()) {
        return Err(Error::shape("batch elements differ in shape"));
    }
    let (positions, channels) = layout(first.shape())?;
    if channels != state.channels() {
        return Err(Error::shape(format!(
            "input has {channels} channels, normalization was built for {}",
            state.channels()
        )));
    }
    Ok((positions, channels))
}

fn gather<T: Real>(batch: &[QTensor<T>], positions: usize, channels: usize, c: usize) -> Vec<Quaternion<T>> {
    let mut out = Vec::with_capacity(batch.len() * positions);
    for t in batch {
        for p in 0..positions {
            out.push(t.get(p * channels + c));
        }
    }
    out
}

fn scatter<T: Real>(out: &mut [QTensor<T>], positions: usize, channels: usize, c: usize, values: &[Quaternion<T>]) {
    for (b, t) in out.iter_mut().enumerate() {
        for p in 0..positions {
            t.set(p * channels + c, values[b * positions + p]);
        }
    }
}

fn mean<T: Real>(xs: &[Quaternion<T>]) -> Quaternion<T> {
    xs.iter().copied().sum::<Quaternion<T>>() / T::of(xs.len() as f64)
}

fn ema<T: Real>(old: T, new: T, m: T) -> T {
    (T::one() - m) * old + m * new
}

/// Inverse square root with `0 ↦ 0`, so an all-zero numerator stays zero.
fn rsqrt<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one() / x.sqrt()
    } else {
        T::zero()
    }
}

/// Per-channel quantities kept from a training pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BnChannelCache<T> {
    /// Centred inputs (RQBN: raw inputs).
    pub centred: Vec<Quaternion<T>>,
    /// WQBN whitened values.
    pub whitened: Vec<Quaternion<T>>,
    /// WQBN Cholesky factor and its inverse.
    pub chol: Mat4<T>,
    pub chol_inv: Mat4<T>,
    /// VQBN variance or RQBN mean squared magnitude.
    pub var: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnCache<T> {
    pub positions: usize,
    pub batch: usize,
    pub channels: Vec<BnChannelCache<T>>,
}

/// Parameter gradients of a normalization layer (same layout as [`BnState`]).
#[derive(Debug, Clone, PartialEq)]
pub struct BnGrads<T> {
    pub gamma_matrix: Vec<Mat4<T>>,
    pub gamma: Vec<T>,
    pub beta: Vec<Quaternion<T>>,
}

/// Apply the layer's normalization to a batch. In [`Mode::Train`] the batch
/// statistics are used, running statistics advance by one EMA step and a
/// cache for [`bn_backward`] is returned.
pub fn bn_forward<T: Real>(
    state: &mut BnState<T>,
    batch: &[QTensor<T>],
    mode: Mode,
) -> Result<(Vec<QTensor<T>>, Option<BnCache<T>>)> {
    let (positions, channels) = check_batch(state, batch)?;
    let total = batch.len() * positions;
    let mut out: Vec<QTensor<T>> = batch.iter().map(|t| QTensor::zeros(t.shape())).collect();
    let mut caches = Vec::with_capacity(channels);
    let m = state.momentum;
    for c in 0..channels {
        let x = gather(batch, positions, channels, c);
        let (y, cache) = match state.kind {
            BnKind::Wqbn => wqbn_channel(state, c, &x, mode, m)?,
            BnKind::Vqbn { linear_variance } => vqbn_channel(state, c, &x, mode, m, linear_variance),
            BnKind::Rqbn => rqbn_channel(state, c, &x, mode, m),
        };
        scatter(&mut out, positions, channels, c, &y);
        caches.push(cache);
    }
    let cache = (mode == Mode::Train).then_some(BnCache {
        positions,
        batch: batch.len(),
        channels: caches,
    });
    debug_assert!(total > 0);
    Ok((out, cache))
}

fn wqbn_channel<T: Real>(
    state: &mut BnState<T>,
    c: usize,
    x: &[Quaternion<T>],
    mode: Mode,
    m: T,
) -> Result<(Vec<Quaternion<T>>, BnChannelCache<T>)> {
    let (mu, cov) = match mode {
        Mode::Train => {
            if x.len() < 2 {
                return Err(Error::invalid(
                    "whitening normalization needs at least 2 values per channel in training",
                ));
            }
            let mu = mean(x);
            let n = T::of(x.len() as f64);
            let mut cov = [[T::zero(); 4]; 4];
            for q in x {
                let v = (*q - mu).to_array();
                for i in 0..4 {
                    for j in 0..4 {
                        cov[i][j] += v[i] * v[j];
                    }
                }
            }
            cov.iter_mut().flatten().for_each(|e| *e /= n);
            (mu, cov)
        }
        Mode::Infer => (state.running_mean[c], state.running_cov[c]),
    };
    let mut a = cov;
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += state.eps;
    }
    let l = cholesky4(&a).ok_or_else(|| Error::Numeric {
        channel: c,
        reason: "covariance plus ridge is not positive definite".into(),
    })?;
    let inv = lower_inverse(&l);
    let g = symmetric_upper(&state.gamma_matrix[c]);
    let beta = state.beta[c];
    let mut centred = Vec::with_capacity(x.len());
    let mut whitened = Vec::with_capacity(x.len());
    let y = x
        .iter()
        .map(|q| {
            let v = *q - mu;
            let xt = matvec(&inv, v.to_array());
            centred.push(v);
            whitened.push(Quaternion::from_array(xt));
            Quaternion::from_array(matvec(&g, xt)) + beta
        })
        .collect();
    if mode == Mode::Train {
        state.running_mean[c] = state.running_mean[c].scale(T::one() - m) + mu.scale(m);
        for i in 0..4 {
            for j in 0..4 {
                state.running_cov[c][i][j] = ema(state.running_cov[c][i][j], cov[i][j], m);
            }
        }
    }
    Ok((
        y,
        BnChannelCache {
            centred,
            whitened,
            chol: l,
            chol_inv: inv,
            var: T::zero(),
        },
    ))
}

fn vqbn_scale<T: Real>(v: T, eps: T, linear: bool) -> T {
    if linear {
        rsqrt(v + eps)
    } else {
        rsqrt(v * v + eps)
    }
}

fn vqbn_channel<T: Real>(
    state: &mut BnState<T>,
    c: usize,
    x: &[Quaternion<T>],
    mode: Mode,
    m: T,
    linear: bool,
) -> (Vec<Quaternion<T>>, BnChannelCache<T>) {
    let (mu, var) = match mode {
        Mode::Train => {
            let mu = mean(x);
            let var = x.iter().map(|q| (*q - mu).norm_sq()).sum::<T>() / T::of(x.len() as f64);
            (mu, var)
        }
        Mode::Infer => (state.running_mean[c], state.running_var[c]),
    };
    let s = vqbn_scale(var, state.eps, linear) * state.gamma[c];
    let centred: Vec<_> = x.iter().map(|q| *q - mu).collect();
    let y = centred.iter().map(|v| v.scale(s) + state.beta[c]).collect();
    if mode == Mode::Train {
        state.running_mean[c] = state.running_mean[c].scale(T::one() - m) + mu.scale(m);
        state.running_var[c] = ema(state.running_var[c], var, m);
    }
    (y, flat_cache(centred, var))
}

fn rqbn_channel<T: Real>(
    state: &mut BnState<T>,
    c: usize,
    x: &[Quaternion<T>],
    mode: Mode,
    m: T,
) -> (Vec<Quaternion<T>>, BnChannelCache<T>) {
    let power = match mode {
        Mode::Train => x.iter().map(|q| q.norm_sq()).sum::<T>() / T::of(x.len() as f64),
        Mode::Infer => state.running_var[c],
    };
    let s = rsqrt(power + state.eps);
    let y = x.iter().map(|q| q.scale(s)).collect();
    if mode == Mode::Train {
        state.running_var[c] = ema(state.running_var[c], power, m);
    }
    (y, flat_cache(x.to_vec(), power))
}

fn flat_cache<T: Real>(centred: Vec<Quaternion<T>>, var: T) -> BnChannelCache<T> {
    BnChannelCache {
        centred,
        whitened: Vec::new(),
        chol: [[T::zero(); 4]; 4],
        chol_inv: [[T::zero(); 4]; 4],
        var,
    }
}

/// Backward pass of a training-mode [`bn_forward`], with the batch statistics
/// treated as functions of the inputs. `d` is the error at the output; the
/// return is the error at the input plus the parameter gradients.
pub fn bn_backward<T: Real>(
    state: &BnState<T>,
    cache: &BnCache<T>,
    d: &[QTensor<T>],
) -> Result<(Vec<QTensor<T>>, BnGrads<T>)> {
    if d.len() != cache.batch {
        return Err(Error::shape(format!(
            "{} output errors for a cached batch of {}",
            d.len(),
            cache.batch
        )));
    }
    let (positions, channels) = check_batch(state, d)?;
    if positions != cache.positions || channels != cache.channels.len() {
        return Err(Error::shape("output errors do not match the cached forward pass"));
    }
    let mut dx: Vec<QTensor<T>> = d.iter().map(|t| QTensor::zeros(t.shape())).collect();
    let mut grads = BnGrads {
        gamma_matrix: vec![[[T::zero(); 4]; 4]; channels],
        gamma: vec![T::zero(); channels],
        beta: vec![Quaternion::zero(); channels],
    };
    for c in 0..channels {
        let dy = gather(d, positions, channels, c);
        let ch = &cache.channels[c];
        let g = match state.kind {
            BnKind::Wqbn => wqbn_backward(state, c, ch, &dy, &mut grads),
            BnKind::Vqbn { linear_variance } => vqbn_backward(state, c, ch, &dy, linear_variance, &mut grads),
            BnKind::Rqbn => rqbn_backward(state, ch, &dy),
        };
        scatter(&mut dx, positions, channels, c, &g);
    }
    Ok((dx, grads))
}

fn centre<T: Real>(dv: Vec<Quaternion<T>>) -> Vec<Quaternion<T>> {
    let m = mean(&dv);
    dv.into_iter().map(|q| q - m).collect()
}

fn wqbn_backward<T: Real>(
    state: &BnState<T>,
    c: usize,
    ch: &BnChannelCache<T>,
    dy: &[Quaternion<T>],
    grads: &mut BnGrads<T>,
) -> Vec<Quaternion<T>> {
    let n = T::of(dy.len() as f64);
    let gamma = symmetric_upper(&state.gamma_matrix[c]);
    let inv = &ch.chol_inv;
    let inv_t = transpose(inv);

    let mut gg = [[T::zero(); 4]; 4];
    let mut d_inv = [[T::zero(); 4]; 4];
    let mut dxt = Vec::with_capacity(dy.len());
    for ((g, xt), v) in dy.iter().zip(&ch.whitened).zip(&ch.centred) {
        let (g, xt, v) = (g.to_array(), xt.to_array(), v.to_array());
        let e = matvec(&gamma, g);
        for i in 0..4 {
            for j in 0..4 {
                gg[i][j] += g[i] * xt[j];
                d_inv[i][j] += e[i] * v[j];
            }
        }
        dxt.push(e);
    }
    grads.beta[c] = dy.iter().copied().sum();
    for i in 0..4 {
        grads.gamma_matrix[c][i][i] = gg[i][i];
        for j in i + 1..4 {
            grads.gamma_matrix[c][i][j] = gg[i][j] + gg[j][i];
        }
    }

    // M = L⁻¹  ⇒  L̄ = −Mᵀ M̄ Mᵀ, lower triangle only.
    let mut d_l = matmul(&matmul(&inv_t, &d_inv), &inv_t);
    for i in 0..4 {
        for j in 0..4 {
            d_l[i][j] = if j <= i { -d_l[i][j] } else { T::zero() };
        }
    }
    // A = L Lᵀ  ⇒  Ā = sym(L⁻ᵀ Φ(Lᵀ L̄) L⁻¹), Φ = lower triangle with halved diagonal.
    let mut p = matmul(&transpose(&ch.chol), &d_l);
    for i in 0..4 {
        for j in 0..4 {
            if j > i {
                p[i][j] = T::zero();
            } else if j == i {
                p[i][j] *= T::of(0.5);
            }
        }
    }
    let s = matmul(&matmul(&inv_t, &p), inv);
    let mut a_bar = s;
    for i in 0..4 {
        for j in 0..4 {
            a_bar[i][j] = (s[i][j] + s[j][i]) * T::of(0.5);
        }
    }

    let two_n = T::of(2.0) / n;
    let dv = dxt
        .iter()
        .zip(&ch.centred)
        .map(|(e, v)| {
            let direct = matvec(&inv_t, *e);
            let through_cov = matvec(&a_bar, v.to_array());
            let mut out = [T::zero(); 4];
            for i in 0..4 {
                out[i] = direct[i] + two_n * through_cov[i];
            }
            Quaternion::from_array(out)
        })
        .collect();
    centre(dv)
}

fn vqbn_backward<T: Real>(
    state: &BnState<T>,
    c: usize,
    ch: &BnChannelCache<T>,
    dy: &[Quaternion<T>],
    linear: bool,
    grads: &mut BnGrads<T>,
) -> Vec<Quaternion<T>> {
    let n = T::of(dy.len() as f64);
    let var = ch.var;
    let s = vqbn_scale(var, state.eps, linear);
    let den = if linear { var + state.eps } else { var * var + state.eps };
    let ds_dvar = if den > T::zero() {
        let dden = if linear { T::one() } else { T::of(2.0) * var };
        -T::of(0.5) * dden / (den * den.sqrt())
    } else {
        T::zero()
    };
    let gamma = state.gamma[c];
    let proj: T = dy.iter().zip(&ch.centred).map(|(g, v)| g.dot(*v)).sum();
    grads.beta[c] = dy.iter().copied().sum();
    grads.gamma[c] = s * proj;
    let k = gamma * proj * ds_dvar * T::of(2.0) / n;
    let dv = dy
        .iter()
        .zip(&ch.centred)
        .map(|(g, v)| g.scale(gamma * s) + v.scale(k))
        .collect();
    centre(dv)
}

fn rqbn_backward<T: Real>(state: &BnState<T>, ch: &BnChannelCache<T>, dy: &[Quaternion<T>]) -> Vec<Quaternion<T>> {
    let n = T::of(dy.len() as f64);
    let den = ch.var + state.eps;
    let s = rsqrt(den);
    let ds = if den > T::zero() {
        -T::of(0.5) / (den * den.sqrt())
    } else {
        T::zero()
    };
    let proj: T = dy.iter().zip(&ch.centred).map(|(g, x)| g.dot(*x)).sum();
    let k = proj * ds * T::of(2.0) / n;
    dy.iter()
        .zip(&ch.centred)
        .map(|(g, x)| g.scale(s) + x.scale(k))
        .collect()
}

pub fn bn_wqbn<T: Real>(state: &mut BnState<T>, batch: &[QTensor<T>], mode: Mode) -> Result<Vec<QTensor<T>>> {
    expect_kind(state, |k| k == BnKind::Wqbn)?;
    Ok(bn_forward(state, batch, mode)?.0)
}

pub fn bn_vqbn<T: Real>(state: &mut BnState<T>, batch: &[QTensor<T>], mode: Mode) -> Result<Vec<QTensor<T>>> {
    expect_kind(state, |k| matches!(k, BnKind::Vqbn { .. }))?;
    Ok(bn_forward(state, batch, mode)?.0)
}

pub fn bn_rqbn<T: Real>(state: &mut BnState<T>, batch: &[QTensor<T>], mode: Mode) -> Result<Vec<QTensor<T>>> {
    expect_kind(state, |k| k == BnKind::Rqbn)?;
    Ok(bn_forward(state, batch, mode)?.0)
}

fn expect_kind<T>(state: &BnState<T>, ok: impl Fn(BnKind) -> bool) -> Result<()> {
    if ok(state.kind) {
        Ok(())
    } else {
        Err(Error::invalid(format!("state is configured for {:?}", state.kind)))
    }
}
