//! Quaternion-valued N-dimensional arrays.
//!
//! Storage is planar: four parallel row-major planes for the `r`, `i`, `j`
//! and `k` components. Feature maps use the `[rows, cols, channels]` layout,
//! where channels are quaternion channels.

use std::io::{Read, Write};

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::quaternion::Quaternion;
use crate::real::Real;

/// Magic prefix of the binary tensor format.
pub const QT1_MAGIC: [u8; 4] = *b"QT1\0";

#[derive(Debug, Clone, PartialEq)]
pub struct QTensor<T> {
    shape: Vec<usize>,
    planes: [Vec<T>; 4],
}

impl<T: Real> QTensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            planes: std::array::from_fn(|_| vec![T::zero(); n]),
        }
    }

    pub fn from_planes(shape: &[usize], planes: [Vec<T>; 4]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if planes.iter().any(|p| p.len() != n) {
            return Err(Error::shape(format!(
                "plane lengths {:?} do not match shape {shape:?}",
                planes.iter().map(Vec::len).collect::<Vec<_>>()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            planes,
        })
    }

    pub fn from_quaternions(shape: &[usize], values: &[Quaternion<T>]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(Error::shape(format!(
                "{} quaternions for shape {shape:?}",
                values.len()
            )));
        }
        let mut t = Self::zeros(shape);
        for (idx, q) in values.iter().enumerate() {
            t.set(idx, *q);
        }
        Ok(t)
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> Quaternion<T>) -> Self {
        let mut t = Self::zeros(shape);
        for idx in 0..t.len() {
            t.set(idx, f(idx));
        }
        t
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.planes[0].len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Component plane `c` (`0 = r, 1 = i, 2 = j, 3 = k`).
    #[inline]
    pub fn plane(&self, c: usize) -> &[T] {
        &self.planes[c]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        &mut self.planes[c]
    }

    #[inline]
    pub fn get(&self, idx: usize) -> Quaternion<T> {
        Quaternion::new(
            self.planes[0][idx],
            self.planes[1][idx],
            self.planes[2][idx],
            self.planes[3][idx],
        )
    }

    #[inline]
    pub fn set(&mut self, idx: usize, q: Quaternion<T>) {
        self.planes[0][idx] = q.r;
        self.planes[1][idx] = q.i;
        self.planes[2][idx] = q.j;
        self.planes[3][idx] = q.k;
    }

    #[inline]
    pub fn add_at(&mut self, idx: usize, q: Quaternion<T>) {
        self.planes[0][idx] += q.r;
        self.planes[1][idx] += q.i;
        self.planes[2][idx] += q.j;
        self.planes[3][idx] += q.k;
    }

    /// Row-major flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::shape(format!(
                "index {index:?} has rank {}, tensor has rank {}",
                index.len(),
                self.shape.len()
            )));
        }
        let mut off = 0;
        for (&i, &n) in index.iter().zip(&self.shape) {
            if i >= n {
                return Err(Error::shape(format!(
                    "index {index:?} out of bounds for {:?}",
                    self.shape
                )));
            }
            off = off * n + i;
        }
        Ok(off)
    }

    pub fn at(&self, index: &[usize]) -> Result<Quaternion<T>> {
        Ok(self.get(self.offset(index)?))
    }

    pub fn iter(&self) -> impl Iterator<Item = Quaternion<T>> + '_ {
        (0..self.len()).map(move |idx| self.get(idx))
    }

    pub fn to_quaternions(&self) -> Vec<Quaternion<T>> {
        self.iter().collect()
    }

    pub fn map(&self, f: impl Fn(Quaternion<T>) -> Quaternion<T>) -> Self {
        Self::from_fn(&self.shape, |idx| f(self.get(idx)))
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// `[rows, cols, channels]` of a rank-3 feature map (rank 2 reads as one channel).
    pub fn hwc(&self) -> Result<[usize; 3]> {
        match *self.shape.as_slice() {
            [h, w] => Ok([h, w, 1]),
            [h, w, c] => Ok([h, w, c]),
            _ => Err(Error::shape(format!(
                "expected a [rows, cols, channels] feature map, got {:?}",
                self.shape
            ))),
        }
    }

    /// Quaternion channel `c` of a feature map, as a `[rows, cols]` tensor.
    pub fn channel(&self, c: usize) -> Result<Self> {
        let [h, w, channels] = self.hwc()?;
        if c >= channels {
            return Err(Error::shape(format!("channel {c} of {channels}")));
        }
        Ok(Self::from_fn(&[h, w], |p| self.get(p * channels + c)))
    }

    /// Stack `[rows, cols]` maps into a `[rows, cols, n]` feature map.
    pub fn stack_channels(maps: &[Self]) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::shape("cannot stack zero channels"))?;
        let [h, w, _] = first.hwc()?;
        let n = maps.len();
        let mut out = Self::zeros(&[h, w, n]);
        for (c, m) in maps.iter().enumerate() {
            if m.shape != [h, w] && m.shape != [h, w, 1] {
                return Err(Error::shape(format!(
                    "channel {c} has shape {:?}, expected [{h}, {w}]",
                    m.shape
                )));
            }
            for p in 0..h * w {
                out.set(p * n + c, m.get(p));
            }
        }
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "cannot add {:?} to {:?}",
                other.shape, self.shape
            )));
        }
        for c in 0..4 {
            for (a, &b) in self.planes[c].iter_mut().zip(&other.planes[c]) {
                *a += b;
            }
        }
        Ok(())
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|q| q * s)
    }

    /// Largest component-wise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "cannot compare {:?} with {:?}",
                self.shape, other.shape
            )));
        }
        let mut m = T::zero();
        for c in 0..4 {
            for (&a, &b) in self.planes[c].iter().zip(&other.planes[c]) {
                m = m.max((a - b).abs());
            }
        }
        Ok(m)
    }

    /// Convert to another precision.
    pub fn cast<U: Real>(&self) -> QTensor<U> {
        QTensor {
            shape: self.shape.clone(),
            planes: std::array::from_fn(|c| {
                self.planes[c].iter().map(|&x| U::of(x.as_f64())).collect()
            }),
        }
    }

    /// Iterate over 2-D windows of the two leading (spatial) axes.
    pub fn windows(&self, spec: WindowSpec) -> Result<Windows<'_, T>> {
        Windows::new(self, spec)
    }

    pub fn write_qt1<W: Write>(&self, mut out: W) -> Result<()> {
        let rank = u8::try_from(self.rank())
            .map_err(|_| Error::Format(format!("rank {} does not fit in a byte", self.rank())))?;
        out.write_all(&QT1_MAGIC)?;
        out.write_all(&[rank])?;
        for &n in &self.shape {
            let n = u32::try_from(n)
                .map_err(|_| Error::Format(format!("extent {n} does not fit in u32")))?;
            out.write_all(&n.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.len() * 4);
        for plane in &self.planes {
            buf.clear();
            for &x in plane {
                buf.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_qt1_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_qt1(&mut buf)?;
        Ok(buf)
    }

    pub fn read_qt1<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if magic != QT1_MAGIC {
            return Err(Error::Format(format!("bad tensor magic {magic:?}")));
        }
        let mut rank = [0u8; 1];
        input.read_exact(&mut rank)?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        let mut word = [0u8; 4];
        for _ in 0..rank[0] {
            input.read_exact(&mut word)?;
            shape.push(u32::from_le_bytes(word) as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| Error::Format(format!("tensor extents {shape:?} overflow")))?;
        let mut planes: [Vec<T>; 4] = Default::default();
        let mut bytes = vec![0u8; n.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?];
        for plane in &mut planes {
            input.read_exact(&mut bytes)?;
            *plane = bytes
                .chunks_exact(4)
                .map(|b| T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
                .collect();
        }
        Self::from_planes(&shape, planes)
    }
}

/// Pack a real tensor whose last axis holds `C` channels (`C % 4 == 0`) into
/// `C / 4` quaternion channels. Channels `4s..4s+4` become `(r, i, j, k)`
/// of quaternion channel `s`.
pub fn pack_channels<T: Real>(x: &ArrayD<T>) -> Result<QTensor<T>> {
    let shape = x.shape();
    let (&c, spatial) = shape
        .split_last()
        .ok_or_else(|| Error::shape("cannot pack a rank-0 tensor"))?;
    if c % 4 != 0 {
        return Err(Error::shape(format!(
            "channel count {c} is not a multiple of 4"
        )));
    }
    let cq = c / 4;
    let mut out_shape = spatial.to_vec();
    out_shape.push(cq);
    let mut out = QTensor::zeros(&out_shape);
    for (flat, &v) in x.iter().enumerate() {
        let (pixel, ch) = (flat / c, flat % c);
        out.plane_mut(ch % 4)[pixel * cq + ch / 4] = v;
    }
    Ok(out)
}

/// Exact inverse of [`pack_channels`].
pub fn unpack_channels<T: Real>(t: &QTensor<T>) -> Result<ArrayD<T>> {
    let (&cq, spatial) = t
        .shape()
        .split_last()
        .ok_or_else(|| Error::shape("cannot unpack a rank-0 tensor"))?;
    let c = cq * 4;
    let mut shape = spatial.to_vec();
    shape.push(c);
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for flat in 0..n {
        let (pixel, ch) = (flat / c, flat % c);
        data.push(t.plane(ch % 4)[pixel * cq + ch / 4]);
    }
    ArrayD::from_shape_vec(IxDyn(&shape), data).map_err(|e| Error::shape(e.to_string()))
}

/// Placement of 2-D windows over the two leading axes of a tensor.
/// Padding is zero padding, per axis; `padding = [0, 0]` is "valid" mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub origin: [usize; 2],
    pub extent: [usize; 2],
    pub stride: [usize; 2],
    pub padding: [usize; 2],
}

impl WindowSpec {
    pub fn new(extent: [usize; 2], stride: [usize; 2]) -> Self {
        Self {
            origin: [0, 0],
            extent,
            stride,
            padding: [0, 0],
        }
    }

    pub fn with_padding(mut self, padding: [usize; 2]) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_origin(mut self, origin: [usize; 2]) -> Self {
        self.origin = origin;
        self
    }

    /// Number of window positions along each axis for an input of extent `dims`.
    pub fn output_extent(&self, dims: [usize; 2]) -> Result<[usize; 2]> {
        let mut out = [0; 2];
        for a in 0..2 {
            if self.stride[a] == 0 || self.extent[a] == 0 {
                return Err(Error::shape("window extent and stride must be >= 1"));
            }
            let padded = dims[a] + 2 * self.padding[a];
            let avail = padded.saturating_sub(self.origin[a]);
            if self.extent[a] > avail {
                return Err(Error::shape(format!(
                    "window extent {} exceeds padded input extent {avail} on axis {a}",
                    self.extent[a]
                )));
            }
            out[a] = (avail - self.extent[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }
}

/// One window: its position in the output grid and the extracted sub-tensor
/// (`[extent0, extent1, trailing axes...]`, zeros where it overlaps padding).
#[derive(Debug, Clone)]
pub struct Window<T> {
    pub position: [usize; 2],
    pub tensor: QTensor<T>,
}

/// Row-major scan over window positions.
pub struct Windows<'a, T> {
    src: &'a QTensor<T>,
    spec: WindowSpec,
    grid: [usize; 2],
    inner: usize,
    next: usize,
}

impl<'a, T: Real> Windows<'a, T> {
    fn new(src: &'a QTensor<T>, spec: WindowSpec) -> Result<Self> {
        if src.rank() < 2 {
            return Err(Error::shape(format!(
                "windows need at least two axes, got {:?}",
                src.shape()
            )));
        }
        let grid = spec.output_extent([src.shape[0], src.shape[1]])?;
        let inner = src.shape[2..].iter().product();
        Ok(Self {
            src,
            spec,
            grid,
            inner,
            next: 0,
        })
    }

    pub fn grid(&self) -> [usize; 2] {
        self.grid
    }
}

impl<T: Real> Iterator for Windows<'_, T> {
    type Item = Window<T>;

    fn next(&mut self) -> Option<Window<T>> {
        if self.next >= self.grid[0] * self.grid[1] {
            return None;
        }
        let position = [self.next / self.grid[1], self.next % self.grid[1]];
        self.next += 1;

        let s = &self.spec;
        let [h, w] = [self.src.shape[0], self.src.shape[1]];
        let mut shape = vec![s.extent[0], s.extent[1]];
        shape.extend_from_slice(&self.src.shape[2..]);
        let mut tensor = QTensor::zeros(&shape);
        for dy in 0..s.extent[0] {
            let y = (s.origin[0] + position[0] * s.stride[0] + dy).checked_sub(s.padding[0]);
            let Some(y) = y.filter(|&y| y < h) else { continue };
            for dx in 0..s.extent[1] {
                let x = (s.origin[1] + position[1] * s.stride[1] + dx).checked_sub(s.padding[1]);
                let Some(x) = x.filter(|&x| x < w) else { continue };
                for e in 0..self.inner {
                    let src = (y * w + x) * self.inner + e;
                    let dst = (dy * s.extent[1] + dx) * self.inner + e;
                    tensor.set(dst, self.src.get(src));
                }
            }
        }
        Some(Window { position, tensor })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.grid[0] * self.grid[1] - self.next;
        (left, Some(left))
    }
}

impl<T: Real> ExactSizeIterator for Windows<'_, T> {}
