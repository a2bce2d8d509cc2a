//! Discrete quaternion convolutions (left, right, two-sided), the classic,
//! geometric and equivariant layer paradigms built on them, and the three
//! multichannel combination schemes.
//!
//! With `flip_kernel = false` (the default) every operator is a
//! cross-correlation: output `(y, x)` reads input `(y·sy + r − py, x·sx + s − px)`
//! against tap `(r, s)`. With `flip_kernel = true` the tap is `(L−1−r, L−1−s)`,
//! which is the true convolution `Σ w(r,s) q(x−r, y−s)` over a centred kernel.

use crate::error::{Error, Result};
use crate::quaternion::Quaternion;
use crate::real::Real;
use crate::tensor::QTensor;

/// Floor applied to `|a|` before dividing by a geometric tap scale.
pub const SCALE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Paradigm {
    Classic,
    Geometric,
    GeometricBiased,
    Equivariant,
}

/// How quaternion input channels are paired with kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelScheme {
    /// Kernel `s` on input channel `s`; outputs are concatenated.
    Autoencoder,
    /// Every kernel `t` on every input channel `s`; output `t·C + s`.
    /// The channel count multiplies at every layer, so this gets expensive fast.
    Pyramidal,
    /// Kernel group `g` holds one kernel per input channel; the group's
    /// outputs are summed into output channel `g`.
    Summed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Left,
    Right,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisMode {
    Fixed([f64; 3]),
    Learnable,
}

impl AxisMode {
    pub fn default_fixed() -> Self {
        let c = 1.0 / 3f64.sqrt();
        AxisMode::Fixed([c, c, c])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvSpec {
    pub paradigm: Paradigm,
    /// Odd kernel extent `L`.
    pub kernel: usize,
    pub stride: [usize; 2],
    pub padding: [usize; 2],
    pub scheme: ChannelScheme,
    /// Only meaningful for the classic paradigm.
    pub orientation: Orientation,
    pub flip_kernel: bool,
    /// Only meaningful for the geometric paradigms.
    pub axis_mode: AxisMode,
}

impl Default for ConvSpec {
    fn default() -> Self {
        Self {
            paradigm: Paradigm::Classic,
            kernel: 3,
            stride: [1, 1],
            padding: [0, 0],
            scheme: ChannelScheme::Summed,
            orientation: Orientation::Left,
            flip_kernel: false,
            axis_mode: AxisMode::default_fixed(),
        }
    }
}

impl ConvSpec {
    pub fn with_kernel(kernel: usize) -> Self {
        Self {
            kernel,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "kernel extent must be odd, got {}",
                self.kernel
            )));
        }
        if self.stride.contains(&0) {
            return Err(Error::invalid("stride must be >= 1 on every axis"));
        }
        if let AxisMode::Fixed(u) = self.axis_mode {
            let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "fixed rotation axis must be unit length, got norm {n}"
                )));
            }
        }
        Ok(())
    }

    pub fn output_extent(&self, input: [usize; 2]) -> Result<[usize; 2]> {
        self.validate()?;
        let mut out = [0; 2];
        for a in 0..2 {
            let padded = input[a] + 2 * self.padding[a];
            if padded < self.kernel {
                return Err(Error::shape(format!(
                    "kernel extent {} exceeds padded input extent {padded} on axis {a}",
                    self.kernel
                )));
            }
            out[a] = (padded - self.kernel) / self.stride[a] + 1;
        }
        Ok(out)
    }

    /// Number of taps per kernel.
    pub fn taps(&self) -> usize {
        self.kernel * self.kernel
    }
}

/// Enumerates every `(output pixel, kernel tap, input pixel)` triple of a
/// convolution in a fixed order: outputs row-major, then taps row-major.
/// Taps that land in the zero padding are skipped.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TapGrid {
    kernel: usize,
    stride: [usize; 2],
    padding: [usize; 2],
    flip: bool,
    pub input: [usize; 2],
    pub output: [usize; 2],
}

impl TapGrid {
    pub fn new(spec: &ConvSpec, input: [usize; 2]) -> Result<Self> {
        Ok(Self {
            kernel: spec.kernel,
            stride: spec.stride,
            padding: spec.padding,
            flip: spec.flip_kernel,
            input,
            output: spec.output_extent(input)?,
        })
    }

    #[inline]
    pub fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        let l = self.kernel;
        let [h, w] = self.input;
        for oy in 0..self.output[0] {
            for ox in 0..self.output[1] {
                let o = oy * self.output[1] + ox;
                for r in 0..l {
                    let Some(iy) = (oy * self.stride[0] + r).checked_sub(self.padding[0]) else {
                        continue;
                    };
                    if iy >= h {
                        continue;
                    }
                    let kr = if self.flip { l - 1 - r } else { r };
                    for s in 0..l {
                        let Some(ix) = (ox * self.stride[1] + s).checked_sub(self.padding[1])
                        else {
                            continue;
                        };
                        if ix >= w {
                            continue;
                        }
                        let ks = if self.flip { l - 1 - s } else { s };
                        f(o, kr * l + ks, iy * w + ix);
                    }
                }
            }
        }
    }
}

fn check_kernel<T: Real>(w: &QTensor<T>, spec: &ConvSpec, what: &str) -> Result<()> {
    spec.validate()?;
    if w.shape() != [spec.kernel, spec.kernel] {
        return Err(Error::shape(format!(
            "{what} kernel has shape {:?}, expected [{}, {}]",
            w.shape(),
            spec.kernel,
            spec.kernel
        )));
    }
    Ok(())
}

fn single_channel<T: Real>(q: &QTensor<T>) -> Result<[usize; 2]> {
    match *q.shape() {
        [h, w] | [h, w, 1] => Ok([h, w]),
        _ => Err(Error::shape(format!(
            "expected a single-channel [rows, cols] input, got {:?}",
            q.shape()
        ))),
    }
}

/// Generic single-channel convolution driver; `op(tap, x)` is the per-tap term.
fn convolve<T: Real>(
    q: &QTensor<T>,
    spec: &ConvSpec,
    op: impl Fn(usize, Quaternion<T>) -> Quaternion<T>,
) -> Result<QTensor<T>> {
    let grid = TapGrid::new(spec, single_channel(q)?)?;
    let mut out = vec![Quaternion::zero(); grid.output[0] * grid.output[1]];
    grid.for_each(|o, tap, i| out[o] += op(tap, q.get(i)));
    QTensor::from_quaternions(&grid.output, &out)
}

/// Left-sided convolution `Σ w(r,s) · q(·)`.
pub fn conv_left<T: Real>(w: &QTensor<T>, q: &QTensor<T>, spec: &ConvSpec) -> Result<QTensor<T>> {
    check_kernel(w, spec, "left")?;
    let taps = w.to_quaternions();
    convolve(q, spec, |t, x| taps[t] * x)
}

/// Right-sided convolution `Σ q(·) · w(r,s)`.
pub fn conv_right<T: Real>(q: &QTensor<T>, w: &QTensor<T>, spec: &ConvSpec) -> Result<QTensor<T>> {
    check_kernel(w, spec, "right")?;
    let taps = w.to_quaternions();
    convolve(q, spec, |t, x| x * taps[t])
}

/// Two-sided convolution `Σ w_left(r,s) · q(·) · w_right(r,s)`.
pub fn conv_twosided<T: Real>(
    w_left: &QTensor<T>,
    q: &QTensor<T>,
    w_right: &QTensor<T>,
    spec: &ConvSpec,
) -> Result<QTensor<T>> {
    if w_left.shape() != w_right.shape() {
        return Err(Error::shape(format!(
            "two-sided kernels differ in extent: {:?} vs {:?}",
            w_left.shape(),
            w_right.shape()
        )));
    }
    check_kernel(w_left, spec, "two-sided")?;
    let left = w_left.to_quaternions();
    let right = w_right.to_quaternions();
    convolve(q, spec, |t, x| left[t] * (x * right[t]))
}

/// Output channel → list of `(kernel index, input channel)` pairs feeding it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connections {
    pub outputs: Vec<Vec<(usize, usize)>>,
}

impl Connections {
    pub fn new(scheme: ChannelScheme, in_channels: usize, kernels: usize) -> Result<Self> {
        if in_channels == 0 || kernels == 0 {
            return Err(Error::shape("channel and kernel counts must be >= 1"));
        }
        let outputs = match scheme {
            ChannelScheme::Autoencoder => {
                if kernels != in_channels {
                    return Err(Error::shape(format!(
                        "autoencoder scheme needs one kernel per input channel ({in_channels}), got {kernels}"
                    )));
                }
                (0..in_channels).map(|s| vec![(s, s)]).collect()
            }
            ChannelScheme::Pyramidal => (0..kernels)
                .flat_map(|t| (0..in_channels).map(move |s| vec![(t, s)]))
                .collect(),
            ChannelScheme::Summed => {
                if !kernels.is_multiple_of(in_channels) {
                    return Err(Error::shape(format!(
                        "summed scheme needs a multiple of {in_channels} kernels, got {kernels}"
                    )));
                }
                (0..kernels / in_channels)
                    .map(|g| (0..in_channels).map(|s| (g * in_channels + s, s)).collect())
                    .collect()
            }
        };
        Ok(Self { outputs })
    }

    pub fn out_channels(&self) -> usize {
        self.outputs.len()
    }
}

/// Kernels needed for `filters` under a scheme: autoencoder ignores
/// `filters`, pyramidal uses `filters` kernels, summed uses `filters` groups.
pub fn kernel_count(scheme: ChannelScheme, in_channels: usize, filters: usize) -> usize {
    match scheme {
        ChannelScheme::Autoencoder => in_channels,
        ChannelScheme::Pyramidal => filters,
        ChannelScheme::Summed => filters * in_channels,
    }
}

/// Concatenate per-channel outputs `F_s = W_s ∗ Q_s`.
pub fn combine_autoencoder<T: Real>(outputs: &[QTensor<T>]) -> Result<QTensor<T>> {
    QTensor::stack_channels(outputs)
}

/// `outputs[t][s] = W_t ∗ Q_s`, placed at output channel `t·C + s`.
pub fn combine_pyramidal<T: Real>(outputs: &[Vec<QTensor<T>>]) -> Result<QTensor<T>> {
    let c = outputs.first().map_or(0, Vec::len);
    if outputs.iter().any(|row| row.len() != c) {
        return Err(Error::shape("pyramidal outputs must form a full kernel × channel grid"));
    }
    let flat: Vec<QTensor<T>> = outputs.iter().flatten().cloned().collect();
    QTensor::stack_channels(&flat)
}

/// Quaternion sum of per-channel outputs into a single channel.
pub fn combine_summed<T: Real>(outputs: &[QTensor<T>]) -> Result<QTensor<T>> {
    let first = outputs
        .first()
        .ok_or_else(|| Error::shape("cannot sum zero outputs"))?;
    let mut acc = first.clone();
    for o in &outputs[1..] {
        acc.add_assign(o)?;
    }
    let [h, w, _] = acc.hwc()?;
    acc.reshape(&[h, w, 1])
}

/// Apply `op(kernel, channel)` over the connection table and combine per scheme.
fn multichannel<T: Real>(
    q: &QTensor<T>,
    spec: &ConvSpec,
    kernels: usize,
    op: impl Fn(usize, &QTensor<T>) -> Result<QTensor<T>>,
) -> Result<QTensor<T>> {
    let [_, _, c] = q.hwc()?;
    let conns = Connections::new(spec.scheme, c, kernels)?;
    let channels: Vec<QTensor<T>> = (0..c).map(|s| q.channel(s)).collect::<Result<_>>()?;
    match spec.scheme {
        ChannelScheme::Autoencoder => {
            let outs: Vec<_> = (0..c)
                .map(|s| op(s, &channels[s]))
                .collect::<Result<_>>()?;
            combine_autoencoder(&outs)
        }
        ChannelScheme::Pyramidal => {
            let grid: Vec<Vec<_>> = (0..kernels)
                .map(|t| (0..c).map(|s| op(t, &channels[s])).collect::<Result<_>>())
                .collect::<Result<_>>()?;
            combine_pyramidal(&grid)
        }
        ChannelScheme::Summed => {
            let groups: Vec<_> = conns
                .outputs
                .iter()
                .map(|pairs| {
                    let outs: Vec<_> = pairs
                        .iter()
                        .map(|&(k, s)| op(k, &channels[s]))
                        .collect::<Result<_>>()?;
                    combine_summed(&outs)
                })
                .collect::<Result<_>>()?;
            QTensor::stack_channels(&groups)
        }
    }
}

fn add_bias<T: Real>(f: &mut QTensor<T>, bias: &[Quaternion<T>]) -> Result<()> {
    let [_, _, c] = f.hwc()?;
    if bias.len() != c {
        return Err(Error::shape(format!(
            "{} biases for {c} output channels",
            bias.len()
        )));
    }
    for idx in 0..f.len() {
        f.add_at(idx, bias[idx % c]);
    }
    Ok(())
}

fn kernel_slices<T: Real>(kernels: &QTensor<T>, spec: &ConvSpec) -> Result<Vec<QTensor<T>>> {
    let l = spec.kernel;
    match *kernels.shape() {
        [n, a, b] if a == l && b == l => Ok((0..n)
            .map(|t| QTensor::from_fn(&[l, l], |p| kernels.get(t * l * l + p)))
            .collect()),
        _ => Err(Error::shape(format!(
            "kernel bank has shape {:?}, expected [n, {l}, {l}]",
            kernels.shape()
        ))),
    }
}

/// Parameters of a classic layer: a bank of `[n, L, L]` kernels (plus a
/// right-hand bank for the two-sided orientation) and one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicParams<T> {
    pub kernels: QTensor<T>,
    pub right_kernels: Option<QTensor<T>>,
    pub bias: Vec<Quaternion<T>>,
}

/// Classic layer: quaternion kernels applied with the configured orientation.
pub fn layer_classic<T: Real>(
    params: &ClassicParams<T>,
    q: &QTensor<T>,
    spec: &ConvSpec,
) -> Result<QTensor<T>> {
    if spec.paradigm != Paradigm::Classic {
        return Err(Error::invalid("layer_classic needs the classic paradigm"));
    }
    let left = kernel_slices(&params.kernels, spec)?;
    let right = match (spec.orientation, &params.right_kernels) {
        (Orientation::TwoSided, Some(r)) => {
            let r = kernel_slices(r, spec)?;
            if r.len() != left.len() {
                return Err(Error::shape("left and right kernel banks differ in size"));
            }
            r
        }
        (Orientation::TwoSided, None) => {
            return Err(Error::invalid("two-sided orientation needs right kernels"))
        }
        _ => Vec::new(),
    };
    let mut f = multichannel(q, spec, left.len(), |t, x| match spec.orientation {
        Orientation::Left => conv_left(&left[t], x, spec),
        Orientation::Right => conv_right(x, &left[t], spec),
        Orientation::TwoSided => conv_twosided(&left[t], x, &right[t], spec),
    })?;
    add_bias(&mut f, &params.bias)?;
    Ok(f)
}

/// Polar kernel of the geometric paradigm: tap `(r,s)` is
/// `a(cos(θ/2) + sin(θ/2) û)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricKernel<T> {
    pub scale: Vec<T>,
    pub angle: Vec<T>,
    pub axis: [T; 3],
}

impl<T: Real> GeometricKernel<T> {
    /// Scale with its magnitude clamped to [`SCALE_FLOOR`] (sign kept).
    pub fn clamped_scale(a: T) -> T {
        let floor = T::of(SCALE_FLOOR);
        if a.abs() >= floor {
            a
        } else if a < T::zero() {
            -floor
        } else {
            floor
        }
    }

    /// Reconstructed quaternion taps `w(r,s)`.
    pub fn taps(&self) -> Vec<Quaternion<T>> {
        let half = T::of(0.5);
        self.scale
            .iter()
            .zip(&self.angle)
            .map(|(&a, &theta)| {
                let (s, c) = (theta * half).sin_cos();
                Quaternion::new(c, s * self.axis[0], s * self.axis[1], s * self.axis[2]).scale(a)
            })
            .collect()
    }

    /// Right-hand taps `w̄(r,s) / a(r,s)`, so that the two-sided product gives
    /// `w q w̄ / a`.
    pub fn right_taps(&self) -> Vec<Quaternion<T>> {
        let mut clamped = 0usize;
        let out = self
            .taps()
            .into_iter()
            .zip(&self.scale)
            .map(|(w, &a)| {
                let ac = Self::clamped_scale(a);
                if ac != a {
                    clamped += 1;
                }
                w.conj() / ac
            })
            .collect();
        if clamped > 0 {
            log::debug!("geometric kernel: {clamped} tap scale(s) clamped to {SCALE_FLOOR:e}");
        }
        out
    }
}

/// Geometric layer: per tap `w q w̄ / a`, plus a bias per output channel for
/// the biased variant.
pub fn layer_geometric<T: Real>(
    kernels: &[GeometricKernel<T>],
    bias: Option<&[Quaternion<T>]>,
    q: &QTensor<T>,
    spec: &ConvSpec,
) -> Result<QTensor<T>> {
    match (spec.paradigm, bias) {
        (Paradigm::Geometric, None) | (Paradigm::GeometricBiased, Some(_)) => {}
        (Paradigm::Geometric, Some(_)) => {
            return Err(Error::invalid("the unbiased geometric paradigm takes no bias"))
        }
        (Paradigm::GeometricBiased, None) => {
            return Err(Error::invalid("the biased geometric paradigm needs a bias"))
        }
        _ => return Err(Error::invalid("layer_geometric needs a geometric paradigm")),
    }
    let l = spec.kernel;
    let mut left = Vec::with_capacity(kernels.len());
    let mut right = Vec::with_capacity(kernels.len());
    for (t, k) in kernels.iter().enumerate() {
        if k.scale.len() != l * l || k.angle.len() != l * l {
            return Err(Error::shape(format!(
                "geometric kernel {t} has {} scales and {} angles, expected {}",
                k.scale.len(),
                k.angle.len(),
                l * l
            )));
        }
        left.push(QTensor::from_quaternions(&[l, l], &k.taps())?);
        right.push(QTensor::from_quaternions(&[l, l], &k.right_taps())?);
    }
    let mut f = multichannel(q, spec, kernels.len(), |t, x| {
        conv_twosided(&left[t], x, &right[t], spec)
    })?;
    if let Some(b) = bias {
        add_bias(&mut f, b)?;
    }
    Ok(f)
}

/// Equivariant layer: a real `[n, L, L]` kernel bank convolved with each of
/// the four component planes.
pub fn layer_equivariant<T: Real>(
    kernels: &[Vec<T>],
    q: &QTensor<T>,
    spec: &ConvSpec,
) -> Result<QTensor<T>> {
    if spec.paradigm != Paradigm::Equivariant {
        return Err(Error::invalid("layer_equivariant needs the equivariant paradigm"));
    }
    let l = spec.kernel;
    let banks: Vec<QTensor<T>> = kernels
        .iter()
        .enumerate()
        .map(|(t, k)| {
            if k.len() != l * l {
                return Err(Error::shape(format!(
                    "real kernel {t} has {} taps, expected {}",
                    k.len(),
                    l * l
                )));
            }
            Ok(QTensor::from_fn(&[l, l], |p| Quaternion::real(k[p])))
        })
        .collect::<Result<_>>()?;
    multichannel(q, spec, kernels.len(), |t, x| conv_left(&banks[t], x, spec))
}
