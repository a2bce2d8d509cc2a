//! Split activations (one real function per component) and the
//! rotation-equivariant ReLU.

use crate::error::{Error, Result};
use crate::quaternion::Quaternion;
use crate::real::Real;

/// Real functions available as split activations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitFn<T> {
    Identity,
    Sigmoid,
    Tanh,
    HardTanh,
    Relu,
    PRelu(T),
    LeakyRelu(T),
}

impl<T: Real> SplitFn<T> {
    pub fn leaky() -> Self {
        SplitFn::LeakyRelu(T::of(0.01))
    }

    pub fn apply(self, x: T) -> T {
        let zero = T::zero();
        let one = T::one();
        match self {
            SplitFn::Identity => x,
            SplitFn::Sigmoid => one / (one + (-x).exp()),
            SplitFn::Tanh => x.tanh(),
            SplitFn::HardTanh => x.max(-one).min(one),
            SplitFn::Relu => x.max(zero),
            SplitFn::PRelu(a) | SplitFn::LeakyRelu(a) => {
                if x > zero {
                    x
                } else {
                    a * x
                }
            }
        }
    }

    /// `f′(x)`; piecewise functions take the left branch at their kinks
    /// (ReLU′(0) = 0, hard-tanh′(±1) = 1).
    pub fn derivative(self, x: T) -> T {
        let zero = T::zero();
        let one = T::one();
        match self {
            SplitFn::Identity => one,
            SplitFn::Sigmoid => {
                let s = self.apply(x);
                s * (one - s)
            }
            SplitFn::Tanh => {
                let t = x.tanh();
                one - t * t
            }
            SplitFn::HardTanh => {
                if x.abs() <= one {
                    one
                } else {
                    zero
                }
            }
            SplitFn::Relu => {
                if x > zero {
                    one
                } else {
                    zero
                }
            }
            SplitFn::PRelu(a) | SplitFn::LeakyRelu(a) => {
                if x > zero {
                    one
                } else {
                    a
                }
            }
        }
    }

    /// Which piece of a piecewise function `x` falls on; smooth functions return 0.
    pub fn branch(self, x: T) -> u8 {
        let one = T::one();
        match self {
            SplitFn::Identity | SplitFn::Sigmoid | SplitFn::Tanh => 0,
            SplitFn::HardTanh => {
                if x < -one {
                    0
                } else if x <= one {
                    1
                } else {
                    2
                }
            }
            SplitFn::Relu | SplitFn::PRelu(_) | SplitFn::LeakyRelu(_) => u8::from(x > T::zero()),
        }
    }
}

pub fn act_split<T: Real>(f: SplitFn<T>, q: Quaternion<T>) -> Quaternion<T> {
    q.map(|x| f.apply(x))
}

/// Mean magnitude of the set, the threshold `c` of the rotation-equivariant ReLU.
pub fn rerelu_threshold<T: Real>(set: &[Quaternion<T>]) -> Result<T> {
    if set.is_empty() {
        return Err(Error::invalid("rotation-equivariant ReLU needs a nonempty set"));
    }
    let sum: T = set.iter().map(|q| q.norm()).sum();
    Ok(sum / T::of(set.len() as f64))
}

/// `q · ‖q‖ / max(‖q‖, c)`, with 0 ↦ 0.
pub fn rerelu_with<T: Real>(q: Quaternion<T>, c: T) -> Quaternion<T> {
    let n = q.norm();
    let m = n.max(c);
    if m == T::zero() {
        Quaternion::zero()
    } else {
        q.scale(n / m)
    }
}

pub fn act_rerelu<T: Real>(set: &[Quaternion<T>]) -> Result<Vec<Quaternion<T>>> {
    let c = rerelu_threshold(set)?;
    Ok(set.iter().map(|&q| rerelu_with(q, c)).collect())
}

/// Vector-Jacobian product of [`rerelu_with`] at `q` with `c` held fixed.
pub fn rerelu_backward<T: Real>(q: Quaternion<T>, c: T, d: Quaternion<T>) -> Quaternion<T> {
    let n = q.norm();
    if n >= c {
        return d;
    }
    if n == T::zero() {
        return Quaternion::zero();
    }
    (d.scale(n) + q.scale(q.dot(d) / n)) / c
}

#[cfg(test)]
mod tests {
    use super::*;

    type Q = Quaternion<f64>;

    const ALL: [SplitFn<f64>; 7] = [
        SplitFn::Identity,
        SplitFn::Sigmoid,
        SplitFn::Tanh,
        SplitFn::HardTanh,
        SplitFn::Relu,
        SplitFn::PRelu(0.25),
        SplitFn::LeakyRelu(0.01),
    ];

    #[test]
    fn relu_example() {
        let q = Q::new(1.0, -2.0, 3.0, -4.0);
        assert_eq!(act_split(SplitFn::Relu, q), Q::new(1.0, 0.0, 3.0, 0.0));
        let mask = q.map(|x| SplitFn::<f64>::Relu.derivative(x));
        assert_eq!(mask, Q::new(1.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn sigmoid_at_zero() {
        assert_eq!(act_split(SplitFn::Sigmoid, Q::zero()), Q::new(0.5, 0.5, 0.5, 0.5));
    }

    #[test]
    fn hardtanh_branches() {
        let q = Q::new(-1.0, -0.3, 0.7, 1.0);
        assert_eq!(act_split(SplitFn::HardTanh, q), q);
        assert_eq!(
            act_split(SplitFn::HardTanh, Q::new(-3.0, 2.0, 0.0, 1.5)),
            Q::new(-1.0, 1.0, 0.0, 1.0)
        );
    }

    #[test]
    fn leaky_default_slope() {
        assert_eq!(SplitFn::<f64>::leaky(), SplitFn::LeakyRelu(0.01));
        assert_eq!(SplitFn::<f64>::leaky().apply(-2.0), -0.02);
    }

    #[test]
    fn relu_derivative_at_zero() {
        assert_eq!(SplitFn::<f64>::Relu.derivative(0.0), 0.0);
    }

    #[test]
    fn split_commutes_with_components() {
        let q = Q::new(0.3, -1.7, 2.2, -0.05);
        for f in ALL {
            let out = act_split(f, q);
            for c in 0..4 {
                assert_eq!(out.component(c), f.apply(q.component(c)));
            }
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let h = 1e-6;
        for f in ALL {
            for &x in &[-2.3, -0.4, 0.2, 0.9, 1.8] {
                let fd = (f.apply(x + h) - f.apply(x - h)) / (2.0 * h);
                assert!((fd - f.derivative(x)).abs() < 1e-8, "{f:?} at {x}");
            }
        }
    }

    #[test]
    fn rerelu_equal_magnitudes_passthrough() {
        let set = [Q::new(2.0, 0.0, 0.0, 0.0), Q::new(0.0, 0.0, 2.0, 0.0), Q::new(0.0, 1.2, 1.6, 0.0)];
        let out = act_rerelu(&set).unwrap();
        assert_eq!(out, set);
    }

    #[test]
    fn rerelu_example() {
        let q = Q::new(0.0, 2.0, 0.0, 0.0);
        let out = act_rerelu(&[q, Q::zero()]).unwrap();
        assert_eq!(rerelu_threshold(&[q, Q::zero()]).unwrap(), 1.0);
        assert_eq!(out, vec![q, Q::zero()]);
    }

    #[test]
    fn rerelu_shrinks_small_elements() {
        let big = Q::new(3.0, 0.0, 0.0, 0.0);
        let small = Q::new(0.0, 1.0, 0.0, 0.0);
        let out = act_rerelu(&[big, small]).unwrap();
        assert_eq!(out[0], big);
        assert!((out[1] - small.scale(0.5)).norm() < 1e-15);
    }

    #[test]
    fn rerelu_empty_set() {
        assert!(act_rerelu::<f64>(&[]).is_err());
    }

    #[test]
    fn rerelu_backward_matches_differences() {
        let c = 1.3;
        let h = 1e-6;
        let d = Q::new(0.2, -0.7, 0.4, 1.1);
        for q in [Q::new(0.3, -0.2, 0.5, 0.1), Q::new(1.0, 1.0, -0.5, 0.2)] {
            let g = rerelu_backward(q, c, d);
            for comp in 0..4 {
                let mut p = q;
                *p.component_mut(comp) += h;
                let mut m = q;
                *m.component_mut(comp) -= h;
                let fd = (d.dot(rerelu_with(p, c)) - d.dot(rerelu_with(m, c))) / (2.0 * h);
                assert!((fd - g.component(comp)).abs() < 1e-8);
            }
        }
        assert_eq!(rerelu_backward(Q::zero(), c, d), Q::zero());
    }
}
