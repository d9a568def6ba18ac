use proptest::prelude::*;
use rsc_core::layers::{self, finite_difference_check, LayerSpec, LayerState, Params};
use rsc_core::tensor::{col2im, im2col, matmul, matmul_a_bt, matmul_at_b};
use rsc_core::training::softmax_cross_entropy_check;
use rsc_core::{SeededRng, Tensor};

/// Direct sliding-window 3×3 correlation with zero padding 1.
fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let out_ch = w.shape()[0];
    let mut y = vec![0.0; out_ch * h * wd];
    for o in 0..out_ch {
        for i in 0..h {
            for j in 0..wd {
                let mut acc = b.data()[o];
                for ch in 0..c {
                    for u in 0..3 {
                        for v in 0..3 {
                            let (yi, xj) = (i as isize + u as isize - 1, j as isize + v as isize - 1);
                            if yi < 0 || xj < 0 || yi >= h as isize || xj >= wd as isize {
                                continue;
                            }
                            acc += w.data()[((o * c + ch) * 3 + u) * 3 + v]
                                * x.data()[(ch * h + yi as usize) * wd + xj as usize];
                        }
                    }
                }
                y[(o * h + i) * wd + j] = acc;
            }
        }
    }
    Tensor::new(&[out_ch, h, wd], y).unwrap()
}

fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[i * n + j] = (0..k).map(|p| a.data()[i * k + p] * b.data()[p * n + j]).sum();
        }
    }
    out
}

fn random(shape: &[usize], rng: &mut SeededRng) -> Tensor {
    Tensor::uniform_init(shape, -1.0, 1.0, rng).unwrap()
}

#[test]
fn conv_matches_sliding_window_on_random_inputs() {
    let mut rng = SeededRng::new(404);
    for trial in 0..50 {
        let c = 1 + rng.below(4);
        let out_ch = 1 + rng.below(4);
        let h = 1 + rng.below(16);
        let w = 1 + rng.below(16);
        let x = random(&[c, h, w], &mut rng);
        let spec = LayerSpec::Conv2D { in_ch: c, out_ch };
        let params = Params::glorot(&spec, &mut rng).unwrap();
        let bias = random(&[out_ch], &mut rng);
        let params = Params { bias, ..params };
        let (fast, _) = layers::conv_forward(&params, &x).unwrap();
        let slow = naive_conv(&x, &params.weights, &params.bias);
        assert!(fast.max_abs_diff(&slow).unwrap() < 1e-9, "trial {trial}");
    }
}

#[test]
fn conv_of_centred_delta_with_ones_kernel() {
    let mut x = Tensor::zeros(&[1, 5, 5]).unwrap();
    x.set(&[0, 2, 2], 1.0).unwrap();
    let params = Params {
        weights: Tensor::full(&[1, 1, 3, 3], 1.0).unwrap(),
        bias: Tensor::zeros(&[1]).unwrap(),
    };
    let (y, _) = layers::conv_forward(&params, &x).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let inside = (1..=3).contains(&i) && (1..=3).contains(&j);
            assert_eq!(y.get(&[0, i, j]).unwrap(), if inside { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn matmul_variants_match_naive_products() {
    let mut rng = SeededRng::new(5);
    for _ in 0..20 {
        let (m, k, n) = (1 + rng.below(6), 1 + rng.below(6), 1 + rng.below(6));
        let a = random(&[m, k], &mut rng);
        let b = random(&[k, n], &mut rng);
        let expect = naive_matmul(&a, &b);
        let got = matmul(&a, &b).unwrap();
        for (g, e) in got.data().iter().zip(&expect) {
            assert!((g - e).abs() < 1e-12);
        }
        let at_b = matmul_at_b(&a.transpose().unwrap(), &b).unwrap();
        let a_bt = matmul_a_bt(&a, &b.transpose().unwrap()).unwrap();
        assert!(at_b.max_abs_diff(&got).unwrap() < 1e-12);
        assert!(a_bt.max_abs_diff(&got).unwrap() < 1e-12);
    }
}

#[test]
fn gradient_checks_conv_dense_relu_maxpool_softmax() {
    let mut rng = SeededRng::new(2024);
    for trial in 0..100 {
        let c = 1 + rng.below(3);
        let conv = LayerState::new(LayerSpec::Conv2D { in_ch: c, out_ch: 1 + rng.below(3) }, &mut rng).unwrap();
        let x = random(&[c, 2 + rng.below(4), 2 + rng.below(4)], &mut rng);
        assert!(finite_difference_check(&conv, &x, 1e-5).unwrap() < 1e-6, "conv trial {trial}");

        let (i, o) = (1 + rng.below(6), 1 + rng.below(6));
        let dense = LayerState::new(LayerSpec::Dense { in_units: i, out_units: o }, &mut rng).unwrap();
        assert!(finite_difference_check(&dense, &random(&[i], &mut rng), 1e-5).unwrap() < 1e-6);

        // keep every input at least 0.1 from the kink
        let relu = LayerState::new(LayerSpec::ReLU, &mut rng).unwrap();
        let x = random(&[2, 3, 3], &mut rng).map(|v| if v >= 0.0 { v + 0.1 } else { v - 0.1 });
        assert!(finite_difference_check(&relu, &x, 1e-5).unwrap() < 1e-6);

        // distinct values spaced well beyond the step so the argmax never moves
        let (h, w) = (2 + rng.below(4), 2 + rng.below(4));
        let perm = rng.permutation(2 * h * w);
        let x = Tensor::new(&[2, h, w], perm.iter().map(|&p| p as f64 * 0.01).collect()).unwrap();
        let pool = LayerState::new(LayerSpec::MaxPool2, &mut rng).unwrap();
        assert!(finite_difference_check(&pool, &x, 1e-5).unwrap() < 1e-6);

        let k = 2 + rng.below(5);
        let logits = Tensor::uniform_init(&[k], -4.0, 4.0, &mut rng).unwrap();
        assert!(softmax_cross_entropy_check(&logits, rng.below(k), 1e-5).unwrap() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn im2col_conv_equals_naive(c in 1usize..4, o in 1usize..4, h in 1usize..9, w in 1usize..9, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let x = random(&[c, h, w], &mut rng);
        let params = Params {
            weights: random(&[o, c, 3, 3], &mut rng),
            bias: random(&[o], &mut rng),
        };
        let (fast, _) = layers::conv_forward(&params, &x).unwrap();
        prop_assert!(fast.max_abs_diff(&naive_conv(&x, &params.weights, &params.bias)).unwrap() < 1e-9);
    }

    #[test]
    fn col2im_is_the_adjoint_of_im2col(c in 1usize..4, h in 1usize..7, w in 1usize..7, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let x = random(&[c, h, w], &mut rng);
        let cols = im2col(&x, 3, 1, 1).unwrap();
        let r = random(cols.shape(), &mut rng);
        let lhs: f64 = cols.data().iter().zip(r.data()).map(|(a, b)| a * b).sum();
        let back = col2im(&r, (c, h, w), 3, 1, 1).unwrap();
        let rhs: f64 = x.data().iter().zip(back.data()).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn softmax_is_a_distribution_preserving_argmax(v in prop::collection::vec(-50.0f64..50.0, 1..10)) {
        let x = Tensor::vector(v.clone()).unwrap();
        let p = layers::softmax_forward(&x);
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        prop_assert!(p.data().iter().all(|&q| q > 0.0 && q <= 1.0));
        prop_assert_eq!(rsc_core::metrics::argmax(p.data()), rsc_core::metrics::argmax(&v));
    }

    #[test]
    fn relu_output_is_non_negative_and_idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..20)) {
        let x = Tensor::vector(v).unwrap();
        let y = layers::relu_forward(&x);
        prop_assert!(y.data().iter().all(|&a| a >= 0.0));
        prop_assert_eq!(layers::relu_forward(&y), y);
    }

    #[test]
    fn maxpool_output_dominates_its_window(c in 1usize..3, h in 2usize..9, w in 2usize..9, seed in any::<u64>()) {
        let x = random(&[c, h, w], &mut SeededRng::new(seed));
        let (y, _) = layers::maxpool_forward(&x).unwrap();
        prop_assert_eq!(y.shape(), &[c, h / 2, w / 2]);
        for ch in 0..c {
            for i in 0..h / 2 {
                for j in 0..w / 2 {
                    let m = y.get(&[ch, i, j]).unwrap();
                    for (u, v) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        prop_assert!(x.get(&[ch, 2 * i + u, 2 * j + v]).unwrap() <= m);
                    }
                }
            }
        }
    }

    #[test]
    fn glorot_weights_stay_within_limit(i in 1usize..40, o in 1usize..40, seed in any::<u64>()) {
        let spec = LayerSpec::Dense { in_units: i, out_units: o };
        let p = Params::glorot(&spec, &mut SeededRng::new(seed)).unwrap();
        let limit = (6.0 / (i + o) as f64).sqrt();
        prop_assert!(p.weights.data().iter().all(|w| w.abs() <= limit));
        prop_assert!(p.bias.data().iter().all(|&b| b == 0.0));
    }
}
