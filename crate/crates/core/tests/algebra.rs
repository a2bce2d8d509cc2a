mod oracles;

use oracles::*;
use proptest::prelude::*;
use quatnet::tensor::{pack_channels, unpack_channels};
use quatnet::{QTensor, Quaternion};

type Q = Quaternion<f64>;

fn q() -> impl Strategy<Value = Q> {
    prop::array::uniform4(-10.0f64..10.0).prop_map(Q::from_array)
}

fn close(a: Q, b: Q, tol: f64) -> bool {
    (0..4).all(|c| (a.component(c) - b.component(c)).abs() <= tol)
}

#[test]
fn basis_table() {
    let basis = [Q::one(), Q::unit_i(), Q::unit_j(), Q::unit_k()];
    for (x, a) in basis.iter().enumerate() {
        for (y, b) in basis.iter().enumerate() {
            let mut ex = [0.0; 4];
            ex[x] = 1.0;
            let mut ey = [0.0; 4];
            ey[y] = 1.0;
            assert_eq!((*a * *b).to_array(), ham(ex, ey), "e{x} e{y}");
        }
    }
}

proptest! {
    #[test]
    fn product_matches_oracle(a in q(), b in q()) {
        prop_assert_eq!((a * b).to_array(), ham(a.to_array(), b.to_array()));
    }

    #[test]
    fn associative(a in q(), b in q(), c in q()) {
        let scale = 1.0 + a.norm() * b.norm() * c.norm();
        prop_assert!(close((a * b) * c, a * (b * c), 1e-12 * scale));
    }

    #[test]
    fn norm_is_multiplicative(a in q(), b in q()) {
        prop_assert!(((a * b).norm() - a.norm() * b.norm()).abs() <= 1e-12 * (1.0 + a.norm() * b.norm()));
    }

    #[test]
    fn conjugate_reverses_products(a in q(), b in q()) {
        prop_assert!(close((a * b).conj(), b.conj() * a.conj(), 1e-12 * (1.0 + a.norm() * b.norm())));
    }

    #[test]
    fn polar_round_trip(a in q()) {
        prop_assume!(a.imag().iter().map(|x| x * x).sum::<f64>().sqrt() > 1e-6);
        let back = Q::from_polar(&a.to_polar()).unwrap();
        prop_assert!(close(back, a, 1e-12 * (1.0 + a.norm())));
    }

    #[test]
    fn sandwich_preserves_real_part_and_norm(a in q(), v in prop::array::uniform4(-1.0f64..1.0)) {
        let n = norm(v);
        prop_assume!(n > 1e-3);
        let w = Q::from_array(v.map(|x| x / n));
        let r = Q::sandwich(w, a).unwrap();
        prop_assert!((r.r - a.r).abs() <= 1e-12 * (1.0 + a.norm()));
        prop_assert!((r.norm() - a.norm()).abs() <= 1e-12 * (1.0 + a.norm()));
    }

    #[test]
    fn pack_unpack_round_trip(h in 1usize..5, w in 1usize..5, c in 1usize..4, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = ndarray::ArrayD::from_shape_fn(vec![h, w, 4 * c], |_| rng.random_range(-1.0f64..1.0));
        let back = unpack_channels(&pack_channels(&x).unwrap()).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn qt1_round_trip_is_bit_exact(vals in prop::collection::vec(prop::array::uniform4(any::<f32>()), 1..40)) {
        let t = QTensor::<f32>::from_fn(&[vals.len()], |i| Quaternion::from_array(vals[i]));
        let bytes = t.to_qt1_bytes().unwrap();
        let back = QTensor::<f32>::read_qt1(bytes.as_slice()).unwrap();
        let bits = |t: &QTensor<f32>| t.iter().flat_map(|q| q.to_array()).map(f32::to_bits).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&t));
        prop_assert_eq!(back.to_qt1_bytes().unwrap(), bytes);
    }
}
