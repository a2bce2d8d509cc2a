//! Split (component-wise) and fully quaternion (magnitude) pooling.

use crate::error::{Error, Result};
use crate::quaternion::Quaternion;
use crate::real::Real;
use crate::tensor::QTensor;

/// Magnitudes closer than this (scaled by precision) count as tied.
pub const MAGNITUDE_TIE: f64 = 1e-12;

fn nonempty<T>(window: &[Quaternion<T>]) -> Result<()> {
    if window.is_empty() {
        Err(Error::invalid("pooling window is empty"))
    } else {
        Ok(())
    }
}

/// Per-component index of the maximum; ties go to the earliest element.
pub fn split_max_indices<T: Real>(window: &[Quaternion<T>]) -> Result<[usize; 4]> {
    nonempty(window)?;
    let mut best = [0usize; 4];
    for (n, q) in window.iter().enumerate().skip(1) {
        for (c, b) in best.iter_mut().enumerate() {
            if q.component(c) > window[*b].component(c) {
                *b = n;
            }
        }
    }
    Ok(best)
}

pub fn pool_split_max<T: Real>(window: &[Quaternion<T>]) -> Result<Quaternion<T>> {
    let idx = split_max_indices(window)?;
    let mut out = Quaternion::zero();
    for (c, &n) in idx.iter().enumerate() {
        *out.component_mut(c) = window[n].component(c);
    }
    Ok(out)
}

pub fn pool_split_avg<T: Real>(window: &[Quaternion<T>]) -> Result<Quaternion<T>> {
    nonempty(window)?;
    let sum: Quaternion<T> = window.iter().copied().sum();
    Ok(sum / T::of(window.len() as f64))
}

fn cosine<T: Real>(a: Quaternion<T>, b: Quaternion<T>) -> T {
    let den = a.norm() * b.norm();
    if den == T::zero() {
        T::zero()
    } else {
        a.dot(b) / den
    }
}

/// Index of the element with the largest magnitude. Near-ties are settled by
/// the cosine similarity to the window's component-wise mean, then by scan order.
pub fn pool_fully_magnitude_index<T: Real>(window: &[Quaternion<T>]) -> Result<usize> {
    nonempty(window)?;
    let norms: Vec<T> = window.iter().map(|q| q.norm()).collect();
    let top = norms.iter().copied().fold(T::neg_infinity(), T::max);
    let tol = T::tol(MAGNITUDE_TIE);
    let tied: Vec<usize> = (0..window.len()).filter(|&n| top - norms[n] <= tol).collect();
    if tied.len() == 1 {
        return Ok(tied[0]);
    }
    let mean = pool_split_avg(window)?;
    let mut best = tied[0];
    let mut best_cos = cosine(window[best], mean);
    for &n in &tied[1..] {
        let c = cosine(window[n], mean);
        if c > best_cos {
            best = n;
            best_cos = c;
        }
    }
    Ok(best)
}

pub fn pool_fully_magnitude<T: Real>(window: &[Quaternion<T>]) -> Result<Quaternion<T>> {
    Ok(window[pool_fully_magnitude_index(window)?])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    SplitMax,
    SplitAvg,
    FullyMagnitude,
}

/// Spatial pooling over `[rows, cols, channels]` maps, channel by channel, no padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool2d {
    pub kind: PoolKind,
    pub extent: [usize; 2],
    pub stride: [usize; 2],
}

/// Where each output component was taken from, for argmax gradient routing.
/// Empty for average pooling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolRoute {
    pub sources: Vec<[usize; 4]>,
}

impl Pool2d {
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if self.extent.contains(&0) || self.stride.contains(&0) {
            return Err(Error::invalid("pool extent and stride must be >= 1"));
        }
        let [h, w, c] = hwc(input)?;
        if self.extent[0] > h || self.extent[1] > w {
            return Err(Error::shape(format!(
                "pool window {:?} exceeds input {h}x{w}",
                self.extent
            )));
        }
        Ok(vec![
            (h - self.extent[0]) / self.stride[0] + 1,
            (w - self.extent[1]) / self.stride[1] + 1,
            c,
        ])
    }

    pub fn forward<T: Real>(&self, x: &QTensor<T>) -> Result<(QTensor<T>, PoolRoute)> {
        let out_shape = self.output_shape(x.shape())?;
        let [_, w, c] = hwc(x.shape())?;
        let (ho, wo) = (out_shape[0], out_shape[1]);
        let mut out = QTensor::zeros(&out_shape);
        let mut sources = Vec::new();
        let mut idx = Vec::with_capacity(self.extent[0] * self.extent[1]);
        let mut window = Vec::with_capacity(idx.capacity());
        for oy in 0..ho {
            for ox in 0..wo {
                for ch in 0..c {
                    idx.clear();
                    for r in 0..self.extent[0] {
                        for s in 0..self.extent[1] {
                            let iy = oy * self.stride[0] + r;
                            let ix = ox * self.stride[1] + s;
                            idx.push((iy * w + ix) * c + ch);
                        }
                    }
                    window.clear();
                    window.extend(idx.iter().map(|&i| x.get(i)));
                    let o = (oy * wo + ox) * c + ch;
                    match self.kind {
                        PoolKind::SplitAvg => out.set(o, pool_split_avg(&window)?),
                        PoolKind::SplitMax => {
                            let best = split_max_indices(&window)?;
                            let mut q = Quaternion::zero();
                            for comp in 0..4 {
                                *q.component_mut(comp) = window[best[comp]].component(comp);
                            }
                            out.set(o, q);
                            sources.push(best.map(|b| idx[b]));
                        }
                        PoolKind::FullyMagnitude => {
                            let n = pool_fully_magnitude_index(&window)?;
                            out.set(o, window[n]);
                            sources.push([idx[n]; 4]);
                        }
                    }
                }
            }
        }
        Ok((out, PoolRoute { sources }))
    }

    /// Route the output error back to the input: argmax positions for the max
    /// variants, an even share of every window element for the average.
    pub fn backward<T: Real>(
        &self,
        input_shape: &[usize],
        route: &PoolRoute,
        d: &QTensor<T>,
    ) -> Result<QTensor<T>> {
        let out_shape = self.output_shape(input_shape)?;
        if d.shape() != out_shape.as_slice() {
            return Err(Error::shape(format!(
                "pool error has shape {:?}, expected {out_shape:?}",
                d.shape()
            )));
        }
        let mut dx = QTensor::zeros(input_shape);
        if self.kind == PoolKind::SplitAvg {
            let [_, w, c] = hwc(input_shape)?;
            let share = T::one() / T::of((self.extent[0] * self.extent[1]) as f64);
            for oy in 0..out_shape[0] {
                for ox in 0..out_shape[1] {
                    for ch in 0..c {
                        let g = d.get((oy * out_shape[1] + ox) * c + ch).scale(share);
                        for r in 0..self.extent[0] {
                            for s in 0..self.extent[1] {
                                let iy = oy * self.stride[0] + r;
                                let ix = ox * self.stride[1] + s;
                                dx.add_at((iy * w + ix) * c + ch, g);
                            }
                        }
                    }
                }
            }
            return Ok(dx);
        }
        if route.sources.len() != d.len() {
            return Err(Error::MissingCache("pool routing does not match the output".into()));
        }
        for (o, src) in route.sources.iter().enumerate() {
            let g = d.get(o);
            for (comp, &i) in src.iter().enumerate() {
                dx.plane_mut(comp)[i] += g.component(comp);
            }
        }
        Ok(dx)
    }
}

fn hwc(shape: &[usize]) -> Result<[usize; 3]> {
    match *shape {
        [h, w] => Ok([h, w, 1]),
        [h, w, c] => Ok([h, w, c]),
        _ => Err(Error::shape(format!(
            "pooling expects [rows, cols] or [rows, cols, channels], got {shape:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Q = Quaternion<f64>;

    #[test]
    fn split_max_examples() {
        let q = Q::new(0.1, -2.0, 3.0, 0.5);
        assert_eq!(pool_split_max(&[q]).unwrap(), q);
        let w = [Q::new(1.0, 0.0, 0.0, 0.0), Q::new(0.0, 2.0, 0.0, 0.0)];
        assert_eq!(pool_split_max(&w).unwrap(), Q::new(1.0, 2.0, 0.0, 0.0));
        assert_eq!(pool_split_max(&[q, q, q]).unwrap(), q);
    }

    #[test]
    fn split_avg_mean() {
        let w = [Q::new(1.0, 0.0, 2.0, 0.0), Q::new(3.0, 2.0, 0.0, -4.0)];
        assert_eq!(pool_split_avg(&w).unwrap(), Q::new(2.0, 1.0, 1.0, -2.0));
    }

    #[test]
    fn fully_magnitude_examples() {
        let w = [Q::one(), Q::new(0.0, 2.0, 0.0, 0.0), Q::new(0.0, 0.0, 0.5, 0.0)];
        assert_eq!(pool_fully_magnitude(&w).unwrap(), Q::new(0.0, 2.0, 0.0, 0.0));
        assert_eq!(pool_fully_magnitude(&[w[2]]).unwrap(), w[2]);
    }

    #[test]
    fn fully_magnitude_tie_uses_cosine() {
        let q = Q::new(0.3, 0.9, -0.2, 0.1);
        let near = Q::new(0.29, 0.88, -0.2, 0.1).scale(0.1);
        let w = [-q, near, q];
        assert_eq!(pool_fully_magnitude_index(&w).unwrap(), 2);
        let w = [q, near, -q];
        assert_eq!(pool_fully_magnitude_index(&w).unwrap(), 0);
    }

    #[test]
    fn fully_magnitude_scan_order_fallback() {
        let w = [Q::new(0.0, 1.0, 0.0, 0.0), Q::new(0.0, 0.0, 1.0, 0.0)];
        assert_eq!(pool_fully_magnitude_index(&w).unwrap(), 0);
    }

    #[test]
    fn empty_window() {
        assert!(pool_split_max::<f64>(&[]).is_err());
        assert!(pool_split_avg::<f64>(&[]).is_err());
        assert!(pool_fully_magnitude::<f64>(&[]).is_err());
    }

    fn sample() -> QTensor<f64> {
        QTensor::from_fn(&[4, 4, 2], |p| {
            let t = p as f64;
            Q::new((t * 0.7).sin(), (t * 1.3).cos(), (t * 0.4).sin() * 2.0, t.sqrt() - 3.0)
        })
    }

    #[test]
    fn pool2d_shapes_and_values() {
        let x = sample();
        let p = Pool2d {
            kind: PoolKind::FullyMagnitude,
            extent: [2, 2],
            stride: [2, 2],
        };
        let (y, route) = p.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 2, 2]);
        let window: Vec<Q> = [[0, 0], [0, 1], [1, 0], [1, 1]]
            .iter()
            .map(|&[r, c]| x.at(&[2 + r, c, 1]).unwrap())
            .collect();
        assert_eq!(y.at(&[1, 0, 1]).unwrap(), pool_fully_magnitude(&window).unwrap());
        assert_eq!(route.sources.len(), 8);
    }

    #[test]
    fn pool2d_backward_matches_differences() {
        let x = sample();
        let d = QTensor::from_fn(&[3, 3, 2], |p| Q::new(1.0, -0.5, 0.25, p as f64 * 0.1));
        for kind in [PoolKind::SplitMax, PoolKind::SplitAvg, PoolKind::FullyMagnitude] {
            let p = Pool2d {
                kind,
                extent: [2, 2],
                stride: [1, 1],
            };
            let (_, route) = p.forward(&x).unwrap();
            let g = p.backward(x.shape(), &route, &d).unwrap();
            let h = 1e-7;
            let objective = |t: &QTensor<f64>| {
                let (y, _) = p.forward(t).unwrap();
                (0..y.len()).map(|i| y.get(i).dot(d.get(i))).sum::<f64>()
            };
            for i in 0..x.len() {
                for comp in 0..4 {
                    let mut a = x.clone();
                    a.plane_mut(comp)[i] += h;
                    let mut b = x.clone();
                    b.plane_mut(comp)[i] -= h;
                    let fd = (objective(&a) - objective(&b)) / (2.0 * h);
                    assert!((fd - g.plane(comp)[i]).abs() < 1e-6, "{kind:?} {i} {comp}");
                }
            }
        }
    }

    #[test]
    fn pool2d_window_too_large() {
        let p = Pool2d {
            kind: PoolKind::SplitMax,
            extent: [5, 5],
            stride: [1, 1],
        };
        assert!(p.forward(&sample()).is_err());
    }
}
