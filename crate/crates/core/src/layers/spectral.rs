//! Spectral normalization of quaternion weight matrices.
//!
//! A `K × L` quaternion matrix acts on `ℍ^L` by left multiplication, which is
//! the `4K × 4L` real block matrix with one left-multiplication block per entry.
//! Its largest singular value is estimated by power iteration without ever
//! building the real matrix: `(Bx)_k = Σ_l w_kl x_l` and `(Bᵀu)_l = Σ_k w̄_kl u_k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::quaternion::Quaternion;
use crate::real::Real;
use crate::tensor::QTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState<T> {
    /// Left vector, `K` quaternions.
    pub u: Vec<Quaternion<T>>,
    /// Right vector, `L` quaternions.
    pub v: Vec<Quaternion<T>>,
    pub iterations: usize,
    pub sigma: T,
}

fn unit<T: Real>(xs: &mut [Quaternion<T>]) -> bool {
    let n = xs.iter().map(|q| q.norm_sq()).sum::<T>().sqrt();
    if n > T::zero() {
        xs.iter_mut().for_each(|q| *q = *q / n);
        true
    } else {
        false
    }
}

fn dims<T: Real>(w: &QTensor<T>) -> Result<(usize, usize)> {
    match *w.shape() {
        [k, l] => Ok((k, l)),
        _ => Err(Error::shape(format!(
            "spectral normalization needs a [rows, cols] matrix, got {:?}",
            w.shape()
        ))),
    }
}

pub fn apply<T: Real>(w: &QTensor<T>, x: &[Quaternion<T>]) -> Vec<Quaternion<T>> {
    let l = x.len();
    (0..w.len() / l.max(1))
        .map(|k| (0..l).map(|j| w.get(k * l + j) * x[j]).sum())
        .collect()
}

pub fn apply_transpose<T: Real>(w: &QTensor<T>, u: &[Quaternion<T>]) -> Vec<Quaternion<T>> {
    let k = u.len();
    let l = w.len() / k.max(1);
    (0..l)
        .map(|j| (0..k).map(|i| w.get(i * l + j).conj() * u[i]).sum())
        .collect()
}

impl<T: Real> SpectralState<T> {
    pub fn new(rows: usize, cols: usize, iterations: usize, seed: u64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape("spectral normalization needs a nonempty matrix"));
        }
        if iterations == 0 {
            return Err(Error::invalid("spectral normalization needs at least one iteration"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| {
            let mut xs: Vec<Quaternion<T>> = (0..n)
                .map(|_| {
                    Quaternion::from_array(std::array::from_fn(|_| T::of(rng.random_range(-1.0..1.0))))
                })
                .collect();
            if !unit(&mut xs) {
                xs[0] = Quaternion::one();
            }
            xs
        };
        let u = draw(rows);
        let v = draw(cols);
        Ok(Self {
            u,
            v,
            iterations,
            sigma: T::zero(),
        })
    }

    fn check(&self, w: &QTensor<T>) -> Result<()> {
        let (k, l) = dims(w)?;
        if k != self.u.len() || l != self.v.len() {
            return Err(Error::shape(format!(
                "matrix is {k}x{l}, spectral state was built for {}x{}",
                self.u.len(),
                self.v.len()
            )));
        }
        Ok(())
    }

    /// Advance the persistent vectors by `iterations` power-iteration steps.
    /// A zero matrix leaves them untouched.
    pub fn iterate(&mut self, w: &QTensor<T>) -> Result<()> {
        self.check(w)?;
        for _ in 0..self.iterations {
            let mut v = apply_transpose(w, &self.u);
            if !unit(&mut v) {
                return Ok(());
            }
            let mut u = apply(w, &v);
            if !unit(&mut u) {
                return Ok(());
            }
            self.u = u;
            self.v = v;
        }
        Ok(())
    }

    /// `σ = uᵀ B v` for the current vectors.
    pub fn estimate(&self, w: &QTensor<T>) -> Result<T> {
        self.check(w)?;
        Ok(self.u.iter().zip(apply(w, &self.v)).map(|(a, b)| a.dot(b)).sum())
    }

    /// `∂σ/∂w_kl = u_k v̄_l` with the vectors held fixed.
    pub fn sigma_gradient(&self) -> QTensor<T> {
        let l = self.v.len();
        QTensor::from_fn(&[self.u.len(), l], |p| self.u[p / l] * self.v[p % l].conj())
    }
}

/// Iterate, estimate σ and divide every component of `W` by it.
/// For a zero matrix `W` is returned unchanged and `state.sigma` is 0.
pub fn spectral_normalize<T: Real>(state: &mut SpectralState<T>, w: &QTensor<T>) -> Result<QTensor<T>> {
    state.iterate(w)?;
    normalize_with_current(state, w)
}

/// Divide by σ from the current vectors without iterating.
pub fn normalize_with_current<T: Real>(state: &mut SpectralState<T>, w: &QTensor<T>) -> Result<QTensor<T>> {
    let sigma = state.estimate(w)?;
    if sigma <= T::zero() {
        log::warn!("spectral normalization: zero matrix, σ = 0, weights left unchanged");
        state.sigma = T::zero();
        return Ok(w.clone());
    }
    state.sigma = sigma;
    Ok(w.scale(T::one() / sigma))
}

/// Map an error `g` on the normalized matrix `Ŵ = W/σ` back to `W`:
/// `(g − ⟨g, Ŵ⟩ ∂σ/∂W) / σ`.
pub fn spectral_backward<T: Real>(state: &SpectralState<T>, normalized: &QTensor<T>, g: &QTensor<T>) -> Result<QTensor<T>> {
    if state.sigma <= T::zero() {
        return Ok(g.clone());
    }
    let inner: T = (0..g.len()).map(|i| g.get(i).dot(normalized.get(i))).sum();
    let ds = state.sigma_gradient();
    Ok(QTensor::from_fn(g.shape(), |i| {
        (g.get(i) - ds.get(i).scale(inner)) / state.sigma
    }))
}
