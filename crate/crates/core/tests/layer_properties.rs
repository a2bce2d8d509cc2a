use proptest::prelude::*;
use quatnet::layers::activation::{act_rerelu, act_split, SplitFn};
use quatnet::layers::norm::{bn_wqbn, BnKind, BnState, Mode};
use quatnet::layers::pool::{pool_fully_magnitude, pool_split_avg, pool_split_max};
use quatnet::{QTensor, Quaternion};

type Q = Quaternion<f64>;

fn q() -> impl Strategy<Value = Q> {
    prop::array::uniform4(-5.0f64..5.0).prop_map(Q::from_array)
}

fn split_fns() -> Vec<SplitFn<f64>> {
    vec![
        SplitFn::Identity,
        SplitFn::Sigmoid,
        SplitFn::Tanh,
        SplitFn::HardTanh,
        SplitFn::Relu,
        SplitFn::PRelu(0.3),
        SplitFn::LeakyRelu(0.01),
    ]
}

proptest! {
    #[test]
    fn split_activations_act_per_component(x in q()) {
        for f in split_fns() {
            let y = act_split(f, x);
            for c in 0..4 {
                prop_assert_eq!(y.component(c), f.apply(x.component(c)));
            }
        }
    }

    #[test]
    fn rerelu_is_positively_homogeneous(xs in prop::collection::vec(q(), 1..12), lambda in 0.1f64..10.0) {
        let a = act_rerelu(&xs).unwrap();
        let scaled: Vec<Q> = xs.iter().map(|x| x.scale(lambda)).collect();
        let b = act_rerelu(&scaled).unwrap();
        for (p, r) in a.iter().zip(&b) {
            for c in 0..4 {
                prop_assert!((p.component(c) * lambda - r.component(c)).abs() <= 1e-10 * (1.0 + lambda * p.norm()));
            }
        }
    }

    #[test]
    fn rerelu_never_grows_magnitudes(xs in prop::collection::vec(q(), 1..12)) {
        for (x, y) in xs.iter().zip(act_rerelu(&xs).unwrap()) {
            prop_assert!(y.norm() <= x.norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn wqbn_training_output_has_zero_mean(xs in prop::collection::vec(q(), 8..40)) {
        let batch: Vec<QTensor<f64>> = xs.iter().map(|&x| QTensor::from_fn(&[1], |_| x)).collect();
        let mut state = BnState::<f64>::new(BnKind::Wqbn, 1);
        let out = bn_wqbn(&mut state, &batch, Mode::Train).unwrap();
        let mean = out.iter().map(|t| t.get(0)).sum::<Q>() / out.len() as f64;
        prop_assert!(mean.norm() <= 1e-10);
    }

    #[test]
    fn pools_select_or_average_window_values(xs in prop::collection::vec(q(), 1..10)) {
        let m = pool_fully_magnitude(&xs).unwrap();
        prop_assert!(xs.contains(&m));
        prop_assert!(xs.iter().all(|x| x.norm() <= m.norm()));
        let s = pool_split_max(&xs).unwrap();
        for c in 0..4 {
            prop_assert!(xs.iter().all(|x| x.component(c) <= s.component(c)));
            prop_assert!(xs.iter().any(|x| x.component(c) == s.component(c)));
        }
        let a = pool_split_avg(&xs).unwrap();
        let want = xs.iter().copied().sum::<Q>() / xs.len() as f64;
        prop_assert!((a - want).norm() <= 1e-12);
    }
}
