use super::*;
use crate::conv::{AxisMode, ChannelScheme, Orientation, Paradigm};
use crate::data::Label;
use crate::layers::pool::PoolKind;
use crate::quaternion::Quaternion;
use crate::train::gradcheck::{gradient_check, GradCheckConfig};
use crate::train::loss::{batch_loss, LossKind};
use crate::train::sgd::sgd_step;

type Q = Quaternion<f64>;

fn batch(seed: u64, n: usize, shape: &[usize]) -> Vec<QTensor<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| QTensor::from_fn(shape, |_| Q::from_array(std::array::from_fn(|_| rng.random_range(-1.0..1.0)))))
        .collect()
}

fn conv(paradigm: Paradigm, filters: usize, scheme: ChannelScheme) -> LayerSpec {
    LayerSpec::Conv {
        conv: ConvSpec {
            paradigm,
            scheme,
            padding: [1, 1],
            ..ConvSpec::with_kernel(3)
        },
        filters,
        init: InitMode::QuaternionRelu,
        spectral: None,
    }
}

fn fc(units: usize) -> LayerSpec {
    LayerSpec::Fc {
        units,
        mode: FcMode::Classic,
        init: InitMode::QuaternionNormalized,
        spectral: None,
    }
}

fn check(spec: &ModelSpec, loss: LossKind, labels: Vec<Label<f64>>, seed: u64) -> f64 {
    let mut net = Network::<f64>::new(spec, seed).unwrap();
    let x = batch(seed + 100, labels.len(), &spec.input);
    let r = gradient_check(&mut net, &x, &labels, loss, &GradCheckConfig::default()).unwrap();
    assert!(r.checked > 0);
    r.max_rel_error
}

fn classes(n: usize) -> Vec<Label<f64>> {
    (0..n).map(|i| Label::Class(i % 3)).collect()
}

#[test]
fn shapes_propagate() {
    let spec = ModelSpec {
        input: [6, 6, 1],
        layers: vec![
            conv(Paradigm::Classic, 2, ChannelScheme::Summed),
            LayerSpec::Pool(Pool2d {
                kind: PoolKind::FullyMagnitude,
                extent: [2, 2],
                stride: [2, 2],
            }),
            LayerSpec::Act(ActSpec::Split(SplitFn::Relu)),
            fc(3),
        ],
    };
    let mut net = Network::<f64>::new(&spec, 1).unwrap();
    assert_eq!(net.layers()[0].output_shape(), &[6, 6, 2]);
    assert_eq!(net.layers()[1].output_shape(), &[3, 3, 2]);
    assert_eq!(net.output_shape(), vec![3]);
    let out = net.forward(&batch(2, 2, &[6, 6, 1]), Mode::Infer).unwrap();
    assert_eq!(out[0].shape(), &[3]);
    assert!(net.forward(&batch(2, 1, &[5, 6, 1]), Mode::Infer).is_err());
    assert!(net.forward(&[], Mode::Infer).is_err());
}

#[test]
fn incompatible_layers_fail_at_build() {
    let spec = ModelSpec {
        input: [4, 4, 1],
        layers: vec![fc(2), conv(Paradigm::Classic, 1, ChannelScheme::Summed)],
    };
    assert!(Network::<f64>::new(&spec, 0).is_err());
}

#[test]
fn backward_needs_a_training_pass() {
    let spec = ModelSpec {
        input: [4, 4, 1],
        layers: vec![fc(2)],
    };
    let mut net = Network::<f64>::new(&spec, 0).unwrap();
    let d = vec![QTensor::zeros(&[2])];
    assert!(matches!(net.backward(d.clone()), Err(Error::MissingCache(_))));
    net.forward(&batch(1, 1, &[4, 4, 1]), Mode::Train).unwrap();
    net.forward(&batch(1, 1, &[4, 4, 1]), Mode::Infer).unwrap();
    assert!(matches!(net.backward(d.clone()), Err(Error::MissingCache(_))));
    net.forward(&batch(1, 1, &[4, 4, 1]), Mode::Train).unwrap();
    net.backward(d.clone()).unwrap();
    assert!(matches!(net.backward(d), Err(Error::MissingCache(_))));
}

#[test]
fn probe_leaves_state_alone() {
    let spec = ModelSpec {
        input: [4, 4, 1],
        layers: vec![
            LayerSpec::Norm {
                kind: BnKind::Wqbn,
                eps: 1e-5,
                momentum: 0.1,
            },
            LayerSpec::Fc {
                units: 2,
                mode: FcMode::Classic,
                init: InitMode::QuaternionNormalized,
                spectral: Some(2),
            },
        ],
    };
    let mut net = Network::<f64>::new(&spec, 3).unwrap();
    let x = batch(4, 3, &[4, 4, 1]);
    let before: Vec<_> = net.layers().iter().map(|l| l.buffers()).collect();
    let (a, _) = net.probe(&x).unwrap();
    let (b, _) = net.probe(&x).unwrap();
    assert_eq!(a, b);
    let after: Vec<_> = net.layers().iter().map(|l| l.buffers()).collect();
    assert_eq!(before, after);
    net.forward(&x, Mode::Train).unwrap();
    let trained: Vec<_> = net.layers().iter().map(|l| l.buffers()).collect();
    assert_ne!(before, trained);
}

#[test]
fn seeds_determine_parameters() {
    let spec = ModelSpec {
        input: [5, 5, 1],
        layers: vec![conv(Paradigm::Classic, 2, ChannelScheme::Summed), fc(3)],
    };
    let a = Network::<f64>::new(&spec, 9).unwrap();
    let b = Network::<f64>::new(&spec, 9).unwrap();
    let c = Network::<f64>::new(&spec, 10).unwrap();
    let values = |n: &Network<f64>| n.params().iter().map(|p| p.param.value.clone()).collect::<Vec<_>>();
    assert_eq!(values(&a), values(&b));
    assert_ne!(values(&a), values(&c));
}

#[test]
fn gradcheck_linear_mse() {
    let spec = ModelSpec {
        input: [3, 3, 1],
        layers: vec![fc(2)],
    };
    let labels = (0..3)
        .map(|i| Label::Target(QTensor::from_fn(&[2], |u| Q::new(0.1 * i as f64, -0.2, 0.3 * u as f64, 0.5))))
        .collect();
    assert!(check(&spec, LossKind::MseReal, labels, 1) <= 1e-8);
}

#[test]
fn gradcheck_classic_chain() {
    for orientation in [Orientation::Left, Orientation::Right, Orientation::TwoSided] {
        let spec = ModelSpec {
            input: [5, 5, 1],
            layers: vec![
                LayerSpec::Conv {
                    conv: ConvSpec {
                        orientation,
                        ..ConvSpec::with_kernel(3)
                    },
                    filters: 2,
                    init: InitMode::QuaternionRelu,
                    spectral: None,
                },
                LayerSpec::Act(ActSpec::Split(SplitFn::Relu)),
                fc(3),
            ],
        };
        let e = check(&spec, LossKind::CrossEntropyMagnitude, classes(3), 2);
        assert!(e <= 1e-6, "{orientation:?}: {e}");
    }
}

#[test]
fn gradcheck_geometric_chain() {
    for (paradigm, axis) in [
        (Paradigm::Geometric, AxisMode::default_fixed()),
        (Paradigm::GeometricBiased, AxisMode::Learnable),
    ] {
        let spec = ModelSpec {
            input: [5, 5, 1],
            layers: vec![
                LayerSpec::Conv {
                    conv: ConvSpec {
                        paradigm,
                        axis_mode: axis,
                        ..ConvSpec::with_kernel(3)
                    },
                    filters: 2,
                    init: InitMode::GeometricUniform,
                    spectral: None,
                },
                LayerSpec::Act(ActSpec::Split(SplitFn::Tanh)),
                LayerSpec::Conv {
                    conv: ConvSpec {
                        paradigm,
                        axis_mode: axis,
                        ..ConvSpec::with_kernel(3)
                    },
                    filters: 1,
                    init: InitMode::GeometricUniform,
                    spectral: None,
                },
            ],
        };
        let labels = (0..2)
            .map(|i| Label::Target(QTensor::from_fn(&[1, 1, 1], |_| Q::new(0.2, -0.1 * i as f64, 0.3, 0.0))))
            .collect();
        let e = check(&spec, LossKind::MseReal, labels, 3);
        assert!(e <= 1e-6, "{paradigm:?}: {e}");
    }
}

#[test]
fn gradcheck_equivariant_rerelu_rqbn() {
    let spec = ModelSpec {
        input: [5, 5, 1],
        layers: vec![
            conv(Paradigm::Equivariant, 2, ChannelScheme::Pyramidal),
            LayerSpec::Act(ActSpec::ReRelu),
            LayerSpec::Norm {
                kind: BnKind::Rqbn,
                eps: 1e-5,
                momentum: 0.1,
            },
            fc(3),
        ],
    };
    let e = check(&spec, LossKind::CrossEntropyMagnitude, classes(4), 4);
    assert!(e <= 1e-6, "{e}");
}

#[test]
fn gradcheck_normalization_pool_and_spectral() {
    for kind in [BnKind::Wqbn, BnKind::Vqbn { linear_variance: false }] {
        let spec = ModelSpec {
            input: [4, 4, 1],
            layers: vec![
                LayerSpec::Conv {
                    conv: ConvSpec::with_kernel(3),
                    filters: 2,
                    init: InitMode::QuaternionRelu,
                    spectral: Some(3),
                },
                LayerSpec::Norm {
                    kind,
                    eps: 1e-5,
                    momentum: 0.1,
                },
                LayerSpec::Act(ActSpec::Split(SplitFn::PRelu(0.25))),
                LayerSpec::Pool(Pool2d {
                    kind: PoolKind::SplitMax,
                    extent: [2, 2],
                    stride: [1, 1],
                }),
                LayerSpec::Fc {
                    units: 3,
                    mode: FcMode::Geometric,
                    init: InitMode::QuaternionNormalized,
                    spectral: None,
                },
            ],
        };
        let e = check(&spec, LossKind::CrossEntropyMagnitude, classes(4), 5);
        assert!(e <= 1e-6, "{kind:?}: {e}");
    }
}

#[test]
fn corrupt_control_fails() {
    let spec = ModelSpec {
        input: [3, 3, 1],
        layers: vec![fc(2)],
    };
    let mut net = Network::<f64>::new(&spec, 1).unwrap();
    let x = batch(5, 2, &[3, 3, 1]);
    let labels = vec![Label::Class(0), Label::Class(1)];
    let cfg = GradCheckConfig {
        corrupt: true,
        ..Default::default()
    };
    let r = gradient_check(&mut net, &x, &labels, LossKind::CrossEntropyMagnitude, &cfg).unwrap();
    assert!(!r.passed());
    assert!(r.worst.unwrap().starts_with("layer0.fc."));
}

#[test]
fn small_steps_descend() {
    for paradigm in [Paradigm::Classic, Paradigm::Geometric] {
        for seed in 0..10 {
            let spec = ModelSpec {
                input: [4, 4, 1],
                layers: vec![
                    LayerSpec::Conv {
                        conv: ConvSpec {
                            paradigm,
                            ..ConvSpec::with_kernel(3)
                        },
                        filters: 1,
                        init: if paradigm == Paradigm::Classic {
                            InitMode::QuaternionRelu
                        } else {
                            InitMode::GeometricUniform
                        },
                        spectral: None,
                    },
                    LayerSpec::Act(ActSpec::Split(SplitFn::Tanh)),
                    fc(2),
                ],
            };
            let mut net = Network::<f64>::new(&spec, seed).unwrap();
            let x = batch(seed + 50, 3, &[4, 4, 1]);
            let labels = [Label::Class(0), Label::Class(1), Label::Class(0)];
            let refs: Vec<&Label<f64>> = labels.iter().collect();
            net.zero_grad();
            let out = net.forward(&x, Mode::Train).unwrap();
            let r = batch_loss(LossKind::CrossEntropyMagnitude, &out, &refs).unwrap();
            net.backward(r.errors).unwrap();
            sgd_step(&mut net, 1e-4).unwrap();
            let after = batch_loss(LossKind::CrossEntropyMagnitude, &net.forward(&x, Mode::Train).unwrap(), &refs).unwrap();
            assert!(after.loss < r.loss, "{paradigm:?} seed {seed}");
        }
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let spec = ModelSpec {
        input: [6, 6, 1],
        layers: vec![conv(Paradigm::Classic, 2, ChannelScheme::Summed), fc(3)],
    };
    let x = batch(8, 6, &[6, 6, 1]);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut net = Network::<f64>::new(&spec, 2).unwrap();
            let out = net.forward(&x, Mode::Train).unwrap();
            net.backward(out).unwrap();
            net.params().iter().map(|p| p.param.grad.clone()).collect::<Vec<_>>()
        })
    };
    assert_eq!(run(1), run(4));
}
