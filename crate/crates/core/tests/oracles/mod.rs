//! Reference implementations written independently of the library: plain
//! `[f64; 4]` arithmetic, explicit loops and dense real matrices.

#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix4};
use rand::Rng;

pub type Q4 = [f64; 4];

/// Hamilton product written out term by term.
pub fn ham(a: Q4, b: Q4) -> Q4 {
    let [a1, b1, c1, d1] = a;
    let [a2, b2, c2, d2] = b;
    [
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    ]
}

pub fn conj(a: Q4) -> Q4 {
    [a[0], -a[1], -a[2], -a[3]]
}

pub fn add(a: Q4, b: Q4) -> Q4 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

pub fn norm(a: Q4) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn max_diff(a: &[Q4], b: &[Q4]) -> f64 {
    assert_eq!(a.len(), b.len(), "oracle and library disagree on length");
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| (0..4).map(move |c| (x[c] - y[c]).abs()))
        .fold(0.0, f64::max)
}

/// Real 4×4 matrix of the linear map `x ↦ f(x)`, read off the basis.
pub fn matrix_of(f: impl Fn(Q4) -> Q4) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for col in 0..4 {
        let mut e = [0.0; 4];
        e[col] = 1.0;
        let y = f(e);
        for row in 0..4 {
            m[(row, col)] = y[row];
        }
    }
    m
}

/// Left-multiplication matrix of `w` in the textbook sign layout.
pub fn left_matrix(w: Q4) -> Matrix4<f64> {
    let [a, b, c, d] = w;
    Matrix4::new(a, -b, -c, -d, b, a, -d, c, c, d, a, -b, d, -c, b, a)
}

#[derive(Debug, Clone, Copy)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub kernel: usize,
    pub stride: [usize; 2],
    pub padding: [usize; 2],
    pub flip: bool,
}

impl Grid {
    pub fn out(&self) -> [usize; 2] {
        let o = |n: usize, p: usize, s: usize| (n + 2 * p - self.kernel) / s + 1;
        [o(self.rows, self.padding[0], self.stride[0]), o(self.cols, self.padding[1], self.stride[1])]
    }

    /// Visit `(output index, tap index, input index)` for every in-bounds tap.
    pub fn visit(&self, mut f: impl FnMut(usize, usize, usize)) {
        let [oh, ow] = self.out();
        let l = self.kernel as isize;
        for oy in 0..oh as isize {
            for ox in 0..ow as isize {
                for r in 0..l {
                    for s in 0..l {
                        let iy = oy * self.stride[0] as isize + r - self.padding[0] as isize;
                        let ix = ox * self.stride[1] as isize + s - self.padding[1] as isize;
                        if iy < 0 || ix < 0 || iy >= self.rows as isize || ix >= self.cols as isize {
                            continue;
                        }
                        let (tr, ts) = if self.flip { (l - 1 - r, l - 1 - s) } else { (r, s) };
                        f(
                            (oy * ow as isize + ox) as usize,
                            (tr * l + ts) as usize,
                            (iy * self.cols as isize + ix) as usize,
                        );
                    }
                }
            }
        }
    }
}

/// Scalar interpreter of a single-channel convolution with a per-tap term.
pub fn scalar_conv(g: &Grid, x: &[Q4], term: impl Fn(usize, Q4) -> Q4) -> Vec<Q4> {
    let [oh, ow] = g.out();
    let mut out = vec![[0.0; 4]; oh * ow];
    g.visit(|o, t, i| out[o] = add(out[o], term(t, x[i])));
    out
}

/// Dense `4·out × 4·in` real matrix of a single-channel convolution whose
/// tap `t` acts as the 4×4 block `blocks[t]`.
pub fn block_conv_matrix(g: &Grid, blocks: &[Matrix4<f64>]) -> DMatrix<f64> {
    let [oh, ow] = g.out();
    let mut m = DMatrix::zeros(4 * oh * ow, 4 * g.rows * g.cols);
    g.visit(|o, t, i| {
        let mut view = m.view_mut((4 * o, 4 * i), (4, 4));
        view += blocks[t];
    });
    m
}

pub fn flatten(x: &[Q4]) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_iterator(4 * x.len(), x.iter().flat_map(|q| q.iter().copied()))
}

pub fn unflatten(v: &nalgebra::DVector<f64>) -> Vec<Q4> {
    v.as_slice().chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect()
}

/// Rotate a 3-vector about a unit axis by `angle` (Rodrigues).
pub fn rodrigues(v: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    let [x, y, z] = axis;
    let dot = x * v[0] + y * v[1] + z * v[2];
    let cross = [y * v[2] - z * v[1], z * v[0] - x * v[2], x * v[1] - y * v[0]];
    std::array::from_fn(|n| v[n] * c + cross[n] * s + axis[n] * dot * (1.0 - c))
}

/// Largest singular value of a `k × l` quaternion matrix acting by left
/// multiplication, from a dense SVD of its `4k × 4l` real form.
pub fn dense_sigma(w: &[Q4], k: usize, l: usize) -> f64 {
    let mut m = DMatrix::zeros(4 * k, 4 * l);
    for r in 0..k {
        for c in 0..l {
            m.view_mut((4 * r, 4 * c), (4, 4)).copy_from(&left_matrix(w[r * l + c]));
        }
    }
    m.singular_values().max()
}

pub fn random_q(rng: &mut impl Rng) -> Q4 {
    std::array::from_fn(|_| rng.random_range(-1.0..1.0))
}

pub fn random_qs(rng: &mut impl Rng, n: usize) -> Vec<Q4> {
    (0..n).map(|_| random_q(rng)).collect()
}

/// Uniformly distributed unit quaternion.
pub fn random_versor(rng: &mut impl Rng) -> Q4 {
    loop {
        let q: Q4 = std::array::from_fn(|_| rng.sample(rand_distr::StandardNormal));
        let n = norm(q);
        if n > 1e-6 {
            return q.map(|x| x / n);
        }
    }
}

/// Per-pixel sandwich rotation `v q v̄`.
pub fn rotate_all(v: Q4, x: &[Q4]) -> Vec<Q4> {
    x.iter().map(|&q| ham(ham(v, q), conj(v))).collect()
}

/// Algorithm of the classic initializer replayed with its own generator:
/// Rayleigh magnitude by inverse CDF, uniform phase, positive-octant axis.
pub fn classic_init_oracle(rng: &mut impl Rng, sigma: f64) -> Q4 {
    let u: f64 = rng.random();
    let phi = sigma * (-2.0 * (1.0 - u).ln()).sqrt();
    let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let axis = loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.random());
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.0 {
            break v.map(|x| x / n);
        }
    };
    let (s, c) = theta.sin_cos();
    [phi * c, phi * s * axis[0], phi * s * axis[1], phi * s * axis[2]]
}

/// Mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
