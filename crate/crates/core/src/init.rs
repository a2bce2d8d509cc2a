//! Weight initialization.
//!
//! Classic weights draw a Rayleigh magnitude `φ`, a uniform angle in `(−π, π)`
//! and an axis normalized from three `U(0, 1)` draws (so every axis lies in
//! the positive octant). [`AxisSampling::Isotropic`] uses standard normal
//! components instead, giving a uniformly distributed axis.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::quaternion::Quaternion;
use crate::real::Real;

/// Name of the generator recorded in run metadata.
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha 0.9)";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// `σ = 1/√(2(n_in + n_out))`.
    QuaternionNormalized,
    /// `σ = 1/√(2 n_in)`.
    QuaternionRelu,
    /// Scale `U[±√6/√(n_in + n_out)]`, angle `U[−π/2, π/2]`.
    GeometricUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AxisSampling {
    #[default]
    PositiveOctant,
    Isotropic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitSpec {
    pub mode: InitMode,
    pub fan_in: usize,
    pub fan_out: usize,
    pub seed: u64,
    pub axis: AxisSampling,
}

impl InitSpec {
    pub fn new(mode: InitMode, fan_in: usize, fan_out: usize, seed: u64) -> Self {
        Self {
            mode,
            fan_in,
            fan_out,
            seed,
            axis: AxisSampling::default(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.fan_in == 0 || self.fan_out == 0 {
            return Err(Error::invalid(format!(
                "fan-in and fan-out must be positive, got {} and {}",
                self.fan_in, self.fan_out
            )));
        }
        Ok(())
    }

    /// Rayleigh parameter of the classic modes.
    pub fn sigma(&self) -> Result<f64> {
        self.check()?;
        match self.mode {
            InitMode::QuaternionNormalized => Ok(1.0 / (2.0 * (self.fan_in + self.fan_out) as f64).sqrt()),
            InitMode::QuaternionRelu => Ok(1.0 / (2.0 * self.fan_in as f64).sqrt()),
            InitMode::GeometricUniform => Err(Error::invalid("geometric initialization has no Rayleigh σ")),
        }
    }

    /// Half-width of the geometric scale interval.
    pub fn scale_limit(&self) -> Result<f64> {
        self.check()?;
        Ok(6f64.sqrt() / ((self.fan_in + self.fan_out) as f64).sqrt())
    }
}

/// One classic draw, kept whole so tests can relate the weight to its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicDraw {
    pub phi: f64,
    pub theta: f64,
    pub axis: [f64; 3],
    pub weight: Quaternion<f64>,
}

/// Inverse-CDF Rayleigh sample.
pub fn rayleigh(rng: &mut impl Rng, sigma: f64) -> f64 {
    let u: f64 = rng.random();
    sigma * (-2.0 * (1.0 - u).ln()).sqrt()
}

/// Unit axis; the all-zero draw is rejected.
pub fn sample_axis(rng: &mut impl Rng, mode: AxisSampling) -> [f64; 3] {
    loop {
        let v: [f64; 3] = match mode {
            AxisSampling::PositiveOctant => std::array::from_fn(|_| rng.random::<f64>()),
            AxisSampling::Isotropic => std::array::from_fn(|_| StandardNormal.sample(rng)),
        };
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.0 {
            return v.map(|x| x / n);
        }
    }
}

pub fn init_classic_draws(spec: &InitSpec, count: usize) -> Result<Vec<ClassicDraw>> {
    if spec.mode == InitMode::GeometricUniform {
        return Err(Error::invalid("classic initialization needs a quaternion mode"));
    }
    let sigma = spec.sigma()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((0..count)
        .map(|_| {
            let phi = rayleigh(&mut rng, sigma);
            let theta = rng.random_range(-PI..PI);
            let axis = sample_axis(&mut rng, spec.axis);
            let (s, c) = theta.sin_cos();
            let weight = Quaternion::new(phi * c, phi * s * axis[0], phi * s * axis[1], phi * s * axis[2]);
            ClassicDraw { phi, theta, axis, weight }
        })
        .collect())
}

pub fn init_classic<T: Real>(spec: &InitSpec, count: usize) -> Result<Vec<Quaternion<T>>> {
    Ok(init_classic_draws(spec, count)?
        .into_iter()
        .map(|d| Quaternion::from_array(d.weight.to_array().map(T::of)))
        .collect())
}

/// `(scale, angle)` pairs.
pub fn init_geometric<T: Real>(spec: &InitSpec, count: usize) -> Result<Vec<(T, T)>> {
    if spec.mode != InitMode::GeometricUniform {
        return Err(Error::invalid("geometric initialization needs the geometric mode"));
    }
    let limit = spec.scale_limit()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((0..count)
        .map(|_| {
            let s = rng.random_range(-limit..=limit);
            let theta = rng.random_range(-PI / 2.0..=PI / 2.0);
            (T::of(s), T::of(theta))
        })
        .collect())
}

/// Real Glorot-uniform kernel taps for the equivariant paradigm, which has no
/// quaternion-specific scheme.
pub fn init_real_glorot<T: Real>(fan_in: usize, fan_out: usize, seed: u64, count: usize) -> Result<Vec<T>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::invalid("fan-in and fan-out must be positive"));
    }
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| T::of(rng.random_range(-limit..=limit))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_branches() {
        let n = InitSpec::new(InitMode::QuaternionNormalized, 9, 16, 0);
        assert_eq!(n.sigma().unwrap(), 1.0 / 50f64.sqrt());
        let r = InitSpec::new(InitMode::QuaternionRelu, 9, 16, 0);
        assert_eq!(r.sigma().unwrap(), 1.0 / 18f64.sqrt());
    }

    #[test]
    fn invalid_fans() {
        let s = InitSpec::new(InitMode::QuaternionRelu, 0, 4, 0);
        assert!(init_classic::<f64>(&s, 3).is_err());
        let g = InitSpec::new(InitMode::GeometricUniform, 4, 0, 0);
        assert!(init_geometric::<f64>(&g, 3).is_err());
    }

    #[test]
    fn weight_magnitude_is_phi() {
        let s = InitSpec::new(InitMode::QuaternionNormalized, 8, 8, 3);
        for d in init_classic_draws(&s, 10_000).unwrap() {
            assert!((d.weight.norm() - d.phi).abs() <= 4.0 * f64::EPSILON * d.phi);
            let n = d.axis.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
            assert!(d.axis.iter().all(|&x| x >= 0.0));
            assert!(d.theta >= -PI && d.theta < PI);
        }
    }

    #[test]
    fn isotropic_axes_cover_all_octants() {
        let mut s = InitSpec::new(InitMode::QuaternionNormalized, 8, 8, 3);
        s.axis = AxisSampling::Isotropic;
        let draws = init_classic_draws(&s, 1000).unwrap();
        assert!(draws.iter().any(|d| d.axis[0] < 0.0));
        assert!(draws.iter().all(|d| (d.axis.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn seeds_are_deterministic() {
        let a = InitSpec::new(InitMode::QuaternionRelu, 4, 4, 11);
        let b = InitSpec { seed: 12, ..a };
        let x = init_classic::<f64>(&a, 50).unwrap();
        assert_eq!(x, init_classic::<f64>(&a, 50).unwrap());
        assert_ne!(x, init_classic::<f64>(&b, 50).unwrap());

        let g = InitSpec::new(InitMode::GeometricUniform, 4, 4, 11);
        let y = init_geometric::<f64>(&g, 50).unwrap();
        assert_eq!(y, init_geometric::<f64>(&g, 50).unwrap());
        assert_ne!(y, init_geometric::<f64>(&InitSpec { seed: 12, ..g }, 50).unwrap());
    }

    #[test]
    fn geometric_support_and_moments() {
        let g = InitSpec::new(InitMode::GeometricUniform, 9, 27, 5);
        let limit = g.scale_limit().unwrap();
        let n = 100_000;
        let draws = init_geometric::<f64>(&g, n).unwrap();
        assert!(draws.iter().all(|&(s, t)| s.abs() <= limit && t.abs() <= PI / 2.0));
        let mean = draws.iter().map(|d| d.0).sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d.0 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expect_var = (2.0 * limit).powi(2) / 12.0;
        assert!(mean.abs() <= 3.0 * (expect_var / n as f64).sqrt());
        assert!((var - expect_var).abs() <= 0.05 * expect_var);
    }

    #[test]
    fn mode_mismatch() {
        let g = InitSpec::new(InitMode::GeometricUniform, 4, 4, 0);
        assert!(init_classic::<f64>(&g, 1).is_err());
        let c = InitSpec::new(InitMode::QuaternionRelu, 4, 4, 0);
        assert!(init_geometric::<f64>(&c, 1).is_err());
    }

    #[test]
    fn glorot_bounds() {
        let k = init_real_glorot::<f64>(9, 9, 1, 1000).unwrap();
        let limit = (6.0f64 / 18.0).sqrt();
        assert!(k.iter().all(|x| x.abs() <= limit));
    }
}
