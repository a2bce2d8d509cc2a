//! Quaternion scalar algebra.
//!
//! A quaternion is stored in quadrinomial form `r + i·î + j·ĵ + k·k̂`. The
//! product is the Hamilton product (`î² = ĵ² = k̂² = îĵk̂ = −1`), which is
//! associative but not commutative.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::{Error, Result};
use crate::real::Real;

/// Tolerance on `‖w‖ = 1` for the rotation operators.
pub const VERSOR_TOL: f64 = 1e-9;

/// Imaginary parts below this norm are treated as zero by [`Quaternion::to_polar`].
pub const POLAR_AXIS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quaternion<T> {
    pub r: T,
    pub i: T,
    pub j: T,
    pub k: T,
}

/// Polar form `‖q‖ (cos θ + sin θ û)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarQuaternion<T> {
    pub magnitude: T,
    /// Angle between the real axis and `q`, in `[0, π]`.
    pub angle: T,
    /// Unit imaginary direction.
    pub axis: [T; 3],
}

impl<T: Real> Quaternion<T> {
    #[inline]
    pub const fn new(r: T, i: T, j: T, k: T) -> Self {
        Self { r, i, j, k }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn one() -> Self {
        Self::real(T::one())
    }

    #[inline]
    pub fn real(r: T) -> Self {
        Self::new(r, T::zero(), T::zero(), T::zero())
    }

    /// Pure quaternion `x·î + y·ĵ + z·k̂`.
    #[inline]
    pub fn pure(v: [T; 3]) -> Self {
        Self::new(T::zero(), v[0], v[1], v[2])
    }

    #[inline]
    pub fn unit_i() -> Self {
        Self::new(T::zero(), T::one(), T::zero(), T::zero())
    }

    #[inline]
    pub fn unit_j() -> Self {
        Self::new(T::zero(), T::zero(), T::one(), T::zero())
    }

    #[inline]
    pub fn unit_k() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::one())
    }

    #[inline]
    pub fn from_array(a: [T; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    #[inline]
    pub fn to_array(self) -> [T; 4] {
        [self.r, self.i, self.j, self.k]
    }

    #[inline]
    pub fn imag(self) -> [T; 3] {
        [self.i, self.j, self.k]
    }

    /// Component `c` in `r, i, j, k` order.
    #[inline]
    pub fn component(self, c: usize) -> T {
        match c {
            0 => self.r,
            1 => self.i,
            2 => self.j,
            3 => self.k,
            _ => panic!("quaternion component index {c} out of range"),
        }
    }

    #[inline]
    pub fn component_mut(&mut self, c: usize) -> &mut T {
        match c {
            0 => &mut self.r,
            1 => &mut self.i,
            2 => &mut self.j,
            3 => &mut self.k,
            _ => panic!("quaternion component index {c} out of range"),
        }
    }

    /// Apply a real function to each component independently.
    #[inline]
    pub fn map(self, f: impl Fn(T) -> T) -> Self {
        Self::new(f(self.r), f(self.i), f(self.j), f(self.k))
    }

    /// Component-wise (Hadamard) product.
    #[inline]
    pub fn hadamard(self, o: Self) -> Self {
        Self::new(self.r * o.r, self.i * o.i, self.j * o.j, self.k * o.k)
    }

    /// Hamilton product `self · q`, the full 16-term expansion.
    #[inline]
    pub fn hamilton(self, q: Self) -> Self {
        let p = self;
        Self::new(
            p.r * q.r - p.i * q.i - p.j * q.j - p.k * q.k,
            p.r * q.i + p.i * q.r + p.j * q.k - p.k * q.j,
            p.r * q.j - p.i * q.k + p.j * q.r + p.k * q.i,
            p.r * q.k + p.i * q.j - p.j * q.i + p.k * q.r,
        )
    }

    #[inline]
    pub fn conj(self) -> Self {
        Self::new(self.r, -self.i, -self.j, -self.k)
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.r * self.r + self.i * self.i + self.j * self.j + self.k * self.k
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }

    /// Euclidean inner product of the two 4-vectors.
    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.r * o.r + self.i * o.i + self.j * o.j + self.k * o.k
    }

    #[inline]
    pub fn scale(self, s: T) -> Self {
        Self::new(self.r * s, self.i * s, self.j * s, self.k * s)
    }

    pub fn is_finite(self) -> bool {
        self.r.is_finite() && self.i.is_finite() && self.j.is_finite() && self.k.is_finite()
    }

    pub fn to_polar(self) -> PolarQuaternion<T> {
        let magnitude = self.norm();
        let imag_norm = (self.i * self.i + self.j * self.j + self.k * self.k).sqrt();
        if imag_norm < T::of(POLAR_AXIS_EPS) {
            let angle = if self.r < T::zero() { T::PI() } else { T::zero() };
            return PolarQuaternion {
                magnitude,
                angle,
                axis: [T::one(), T::zero(), T::zero()],
            };
        }
        PolarQuaternion {
            magnitude,
            angle: imag_norm.atan2(self.r),
            axis: [self.i / imag_norm, self.j / imag_norm, self.k / imag_norm],
        }
    }

    pub fn from_polar(p: &PolarQuaternion<T>) -> Result<Self> {
        let [x, y, z] = p.axis;
        let axis_norm = (x * x + y * y + z * z).sqrt();
        if (axis_norm - T::one()).abs() > T::tol(VERSOR_TOL) {
            return Err(Error::invalid(format!(
                "polar axis must be unit length, got norm {axis_norm}"
            )));
        }
        let (s, c) = p.angle.sin_cos();
        Ok(Self::new(c, s * x, s * y, s * z).scale(p.magnitude))
    }

    /// Versor `cos θ + sin θ·û` for a unit axis.
    pub fn versor(angle: T, axis: [T; 3]) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c, s * axis[0], s * axis[1], s * axis[2])
    }

    fn check_versor(w: Self) -> Result<()> {
        let n = w.norm();
        if (n - T::one()).abs() > T::tol(VERSOR_TOL) {
            return Err(Error::invalid(format!(
                "rotation requires a unit versor, got magnitude {n}"
            )));
        }
        Ok(())
    }

    /// `w · q` for a unit versor `w`: a 4-D rotation of `q`.
    pub fn left_rotate(w: Self, q: Self) -> Result<Self> {
        Self::check_versor(w)?;
        Ok(w.hamilton(q))
    }

    /// `w · q · w̄` for a unit versor `w`. Rotates the imaginary part of `q`
    /// by twice the angle of `w` and leaves the real part untouched.
    pub fn sandwich(w: Self, q: Self) -> Result<Self> {
        Self::check_versor(w)?;
        Ok(w.hamilton(q).hamilton(w.conj()))
    }
}

impl<T: Real> Add for Quaternion<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.r + o.r, self.i + o.i, self.j + o.j, self.k + o.k)
    }
}

impl<T: Real> AddAssign for Quaternion<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Quaternion<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.r - o.r, self.i - o.i, self.j - o.j, self.k - o.k)
    }
}

impl<T: Real> SubAssign for Quaternion<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Neg for Quaternion<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.r, -self.i, -self.j, -self.k)
    }
}

/// `p * q` is the Hamilton product.
impl<T: Real> Mul for Quaternion<T> {
    type Output = Self;
    #[inline]
    fn mul(self, q: Self) -> Self {
        self.hamilton(q)
    }
}

impl<T: Real> MulAssign for Quaternion<T> {
    #[inline]
    fn mul_assign(&mut self, q: Self) {
        *self = self.hamilton(q);
    }
}

impl<T: Real> Mul<T> for Quaternion<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

impl<T: Real> Div<T> for Quaternion<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        Self::new(self.r / s, self.i / s, self.j / s, self.k / s)
    }
}

impl<T: Real> std::iter::Sum for Quaternion<T> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |a, b| a + b)
    }
}

impl<T: Real> std::fmt::Display for Quaternion<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {:+}i {:+}j {:+}k", self.r, self.i, self.j, self.k)
    }
}
