mod oracles;

use nalgebra::Matrix4;
use oracles::*;
use proptest::prelude::*;
use quatnet::layers::norm::{bn_vqbn, bn_wqbn, BnKind, BnState, Mode};
use quatnet::layers::spectral::{spectral_normalize, SpectralState};
use quatnet::{QTensor, Quaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn covariance(xs: &[Q4]) -> (Q4, Matrix4<f64>) {
    let n = xs.len() as f64;
    let mut mu = [0.0; 4];
    for q in xs {
        mu = add(mu, *q);
    }
    let mu = mu.map(|v| v / n);
    let mut cov = Matrix4::zeros();
    for q in xs {
        let d = nalgebra::Vector4::from_fn(|i, _| q[i] - mu[i]);
        cov += d * d.transpose();
    }
    (mu, cov / n)
}

/// Correlated, shifted batch: `x = A z + b` with standard normal `z`.
fn correlated_batch(rng: &mut ChaCha8Rng, n: usize, channels: usize) -> Vec<QTensor<f64>> {
    let mixes: Vec<(Matrix4<f64>, Q4)> = (0..channels)
        .map(|_| (Matrix4::from_fn(|_, _| rng.random_range(-1.0..1.0)), random_q(rng)))
        .collect();
    (0..n)
        .map(|_| {
            QTensor::from_fn(&[channels], |c| {
                let z = nalgebra::Vector4::from_fn(|_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
                let x = mixes[c].0 * z;
                Quaternion::new(x[0] + mixes[c].1[0], x[1] + mixes[c].1[1], x[2] + mixes[c].1[2], x[3] + mixes[c].1[3])
            })
        })
        .collect()
}

fn channel(batch: &[QTensor<f64>], c: usize) -> Vec<Q4> {
    batch.iter().map(|t| t.get(c).to_array()).collect()
}

#[test]
fn wqbn_whitens_a_large_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let batch = correlated_batch(&mut rng, 4096, 3);
    let mut state = BnState::<f64>::new(BnKind::Wqbn, 3);
    let out = bn_wqbn(&mut state, &batch, Mode::Train).unwrap();
    for c in 0..3 {
        let (mu, cov) = covariance(&channel(&out, c));
        assert!(norm(mu) <= 1e-10, "channel {c} mean {mu:?}");
        let dist = (cov - Matrix4::identity()).norm();
        assert!(dist <= 0.05, "channel {c}: Frobenius distance {dist}");
    }
}

#[test]
fn vqbn_proper_batch_matches_diagonal_simplification() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let sigma = 0.7;
    let normal = Normal::new(0.0, sigma).unwrap();
    let batch: Vec<QTensor<f64>> = (0..4096)
        .map(|_| QTensor::from_fn(&[1], |_| Quaternion::from_array(std::array::from_fn(|_| normal.sample(&mut rng)))))
        .collect();
    let mut state = BnState::<f64>::new(BnKind::Vqbn { linear_variance: false }, 1);
    state.momentum = 1.0;
    state.eps = 0.0;
    let out = bn_vqbn(&mut state, &batch, Mode::Train).unwrap();
    let v = state.running_var[0];
    assert!((v / (4.0 * sigma * sigma) - 1.0).abs() <= 0.05, "V = {v}");
    let (mu, cov) = covariance(&channel(&batch, 0));
    let diag = Matrix4::identity() * (v / 4.0);
    assert!((cov - diag).abs().max() <= 0.05 * v / 4.0, "covariance {cov}");
    for (x, y) in channel(&batch, 0).iter().zip(channel(&out, 0)) {
        for c in 0..4 {
            assert!((y[c] - (x[c] - mu[c]) / v).abs() <= 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn spectral_normalization_hits_unit_sigma(seed in any::<u64>(), k in 1usize..=16, l in 1usize..=16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_qs(&mut rng, k * l);
        let t = QTensor::from_fn(&[k, l], |i| Quaternion::from_array(w[i]));
        let mut state = SpectralState::new(k, l, 50, seed ^ 1).unwrap();
        let normalized = spectral_normalize(&mut state, &t).unwrap();
        let sigma = dense_sigma(&normalized.iter().map(|q| q.to_array()).collect::<Vec<_>>(), k, l);
        prop_assert!((sigma - 1.0).abs() <= 1e-3, "σ = {}", sigma);
    }
}

#[test]
fn power_iteration_estimate_matches_dense_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (k, l) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let w = random_qs(&mut rng, k * l);
        let t = QTensor::from_fn(&[k, l], |i| Quaternion::from_array(w[i]));
        let mut state = SpectralState::new(k, l, 50, rng.random()).unwrap();
        spectral_normalize(&mut state, &t).unwrap();
        let sigma = dense_sigma(&w, k, l);
        worst = worst.max((state.sigma - sigma).abs() / sigma);
    }
    assert!(worst <= 1e-6, "relative σ error {worst}");
}
