mod oracles;

use nalgebra::Matrix4;
use oracles::*;
use proptest::prelude::*;
use quatnet::conv::{
    conv_left, conv_right, conv_twosided, layer_classic, layer_equivariant, layer_geometric, AxisMode, ClassicParams,
    ConvSpec, GeometricKernel, Orientation, Paradigm,
};
use quatnet::train::backprop::backward_classic;
use quatnet::{QTensor, Quaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-10;

fn tensor(shape: &[usize], xs: &[Q4]) -> QTensor<f64> {
    QTensor::from_fn(shape, |i| Quaternion::from_array(xs[i]))
}

fn quads(t: &QTensor<f64>) -> Vec<Q4> {
    t.iter().map(|q| q.to_array()).collect()
}

#[derive(Debug, Clone)]
struct Case {
    grid: Grid,
    left: Vec<Q4>,
    right: Vec<Q4>,
    input: Vec<Q4>,
}

impl Case {
    fn spec(&self) -> ConvSpec {
        let mut s = ConvSpec::with_kernel(self.grid.kernel);
        s.stride = self.grid.stride;
        s.padding = self.grid.padding;
        s.flip_kernel = self.grid.flip;
        s
    }

    fn kernel(&self, taps: &[Q4]) -> QTensor<f64> {
        tensor(&[self.grid.kernel, self.grid.kernel], taps)
    }

    fn input(&self) -> QTensor<f64> {
        tensor(&[self.grid.rows, self.grid.cols], &self.input)
    }
}

fn case() -> impl Strategy<Value = Case> {
    (0usize..3, 1usize..=9, 1usize..=9, 1usize..=2, 1usize..=2, any::<bool>(), any::<u64>()).prop_flat_map(
        |(k, rows, cols, sy, sx, flip, seed)| {
            let kernel = 2 * k + 1;
            let max_py = kernel / 2 + usize::from(rows < kernel) * kernel;
            let max_px = kernel / 2 + usize::from(cols < kernel) * kernel;
            (0..=max_py, 0..=max_px).prop_filter_map("kernel larger than padded input", move |(py, px)| {
                if rows + 2 * py < kernel || cols + 2 * px < kernel {
                    return None;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let taps = kernel * kernel;
                Some(Case {
                    grid: Grid {
                        rows,
                        cols,
                        kernel,
                        stride: [sy, sx],
                        padding: [py, px],
                        flip,
                    },
                    left: random_qs(&mut rng, taps),
                    right: random_qs(&mut rng, taps),
                    input: random_qs(&mut rng, rows * cols),
                })
            })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn left_matches_scalar_and_block_oracles(c in case()) {
        let got = quads(&conv_left(&c.kernel(&c.left), &c.input(), &c.spec()).unwrap());
        let want = scalar_conv(&c.grid, &c.input, |t, x| ham(c.left[t], x));
        prop_assert!(max_diff(&got, &want) <= TOL);

        let blocks: Vec<Matrix4<f64>> = c.left.iter().map(|&w| left_matrix(w)).collect();
        let dense = block_conv_matrix(&c.grid, &blocks) * flatten(&c.input);
        prop_assert!(max_diff(&got, &unflatten(&dense)) <= TOL);
    }

    #[test]
    fn right_matches_scalar_oracle(c in case()) {
        let got = quads(&conv_right(&c.input(), &c.kernel(&c.left), &c.spec()).unwrap());
        let want = scalar_conv(&c.grid, &c.input, |t, x| ham(x, c.left[t]));
        prop_assert!(max_diff(&got, &want) <= TOL);
    }

    #[test]
    fn twosided_matches_scalar_oracle(c in case()) {
        let got = quads(&conv_twosided(&c.kernel(&c.left), &c.input(), &c.kernel(&c.right), &c.spec()).unwrap());
        let want = scalar_conv(&c.grid, &c.input, |t, x| ham(ham(c.left[t], x), c.right[t]));
        prop_assert!(max_diff(&got, &want) <= TOL);
    }

    #[test]
    fn geometric_matches_rotation_oracle(c in case(), axis_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(axis_seed);
        let v = random_versor(&mut rng);
        let n = (v[1] * v[1] + v[2] * v[2] + v[3] * v[3]).sqrt();
        let axis = [v[1] / n, v[2] / n, v[3] / n];
        let taps = c.grid.kernel * c.grid.kernel;
        let scale: Vec<f64> = (0..taps).map(|_| rng.random_range(0.1..2.0) * if rng.random() { 1.0 } else { -1.0 }).collect();
        let angle: Vec<f64> = (0..taps).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut spec = c.spec();
        spec.paradigm = Paradigm::Geometric;
        spec.axis_mode = AxisMode::Fixed(axis);
        let k = GeometricKernel { scale: scale.clone(), angle: angle.clone(), axis };
        let got = quads(&layer_geometric(&[k], None, &tensor(&[c.grid.rows, c.grid.cols, 1], &c.input), &spec).unwrap());
        // Each tap scales the real part by a and rotates the vector part by θ about û, scaled by a.
        let want = scalar_conv(&c.grid, &c.input, |t, x| {
            let r = rodrigues([x[1], x[2], x[3]], axis, angle[t]);
            [scale[t] * x[0], scale[t] * r[0], scale[t] * r[1], scale[t] * r[2]]
        });
        prop_assert!(max_diff(&got, &want) <= TOL);
    }

    #[test]
    fn equivariant_matches_real_convolution(c in case()) {
        let taps: Vec<f64> = c.left.iter().map(|q| q[0]).collect();
        let mut spec = c.spec();
        spec.paradigm = Paradigm::Equivariant;
        let got = quads(&layer_equivariant(std::slice::from_ref(&taps), &tensor(&[c.grid.rows, c.grid.cols, 1], &c.input), &spec).unwrap());
        let want = scalar_conv(&c.grid, &c.input, |t, x| x.map(|v| taps[t] * v));
        prop_assert!(max_diff(&got, &want) <= TOL);
    }

    #[test]
    fn classic_input_error_is_block_transpose(c in case(), orient in 0usize..3) {
        let orientation = [Orientation::Left, Orientation::Right, Orientation::TwoSided][orient];
        let mut spec = c.spec();
        spec.orientation = orientation;
        let l = c.grid.kernel;
        let params = ClassicParams {
            kernels: tensor(&[1, l, l], &c.left),
            right_kernels: (orientation == Orientation::TwoSided).then(|| tensor(&[1, l, l], &c.right)),
            bias: vec![Quaternion::zero()],
        };
        let x = tensor(&[c.grid.rows, c.grid.cols, 1], &c.input);
        let out = layer_classic(&params, &x, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(c.input.len() as u64);
        let d_top = random_qs(&mut rng, out.len());
        let (_, d_bottom) = backward_classic(&params, &x, &tensor(out.shape(), &d_top), &spec).unwrap();

        let blocks: Vec<Matrix4<f64>> = (0..l * l)
            .map(|t| match orientation {
                Orientation::Left => matrix_of(|q| ham(c.left[t], q)),
                Orientation::Right => matrix_of(|q| ham(q, c.left[t])),
                Orientation::TwoSided => matrix_of(|q| ham(ham(c.left[t], q), c.right[t])),
            })
            .collect();
        let want = block_conv_matrix(&c.grid, &blocks).transpose() * flatten(&d_top);
        prop_assert!(max_diff(&quads(&d_bottom), &unflatten(&want)) <= TOL);
    }
}

#[test]
fn left_multiplication_matrix_matches_basis() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let w = random_q(&mut rng);
        assert!((left_matrix(w) - matrix_of(|q| ham(w, q))).abs().max() < 1e-15);
    }
}

#[test]
fn non_commutativity_witness() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = Grid {
        rows: 3,
        cols: 3,
        kernel: 3,
        stride: [1, 1],
        padding: [1, 1],
        flip: false,
    };
    let k = tensor(&[3, 3], &random_qs(&mut rng, 9));
    let x = tensor(&[3, 3], &random_qs(&mut rng, 9));
    let mut spec = ConvSpec::with_kernel(3);
    spec.padding = g.padding;
    let l = quads(&conv_left(&k, &x, &spec).unwrap());
    let r = quads(&conv_right(&x, &k, &spec).unwrap());
    assert!(max_diff(&l, &r) > 1e-3);
}
