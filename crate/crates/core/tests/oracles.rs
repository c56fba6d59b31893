mod common;

use common::*;
use rand::Rng;
use retina_core::metrics::{confusion, f1_from_confusion, ConfusionMatrix};
use retina_core::nn::{conv2d, pool2d, ConvSpec, PoolMode, PoolSpec};

#[test]
fn conv_matches_nested_loops() {
    for seed in 0..30 {
        let mut r = rng(seed);
        let (stride, pad, k) = (r.gen_range(1..=3), r.gen_range(0..=2), [1, 3, 5][r.gen_range(0..3)]);
        let (c, f) = (r.gen_range(1..=3), r.gen_range(1..=4));
        let (h, w) = (r.gen_range(k..k + 6), r.gen_range(k..k + 6));
        let spec = ConvSpec::new(c, f).kernel_size(k).stride(stride).padding(pad);
        let x = random(&[2, c, h, w], &mut r);
        let kernels = random(&spec.kernel_shape(), &mut r);
        let bias = random(&[f], &mut r);
        let fast = conv2d(&x, &kernels, &bias, &spec).unwrap();
        let slow = conv_oracle(&x, &kernels, &bias, stride, pad);
        assert_eq!(fast.shape(), slow.shape());
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() <= 1e-9, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn pooling_matches_window_oracle_exactly() {
    for seed in 0..30 {
        let mut r = rng(seed);
        let window = r.gen_range(1..=3);
        let stride = r.gen_range(1..=3);
        let x = random(&[2, 2, r.gen_range(window..window + 7), r.gen_range(window..window + 7)], &mut r);
        for (mode, max) in [(PoolMode::Max, true), (PoolMode::Average, false)] {
            let spec = PoolSpec::new(mode).window(window, window).stride(stride);
            let out = pool2d(&x, &spec).unwrap().output;
            let expected = pool_oracle(&x, window, stride, max);
            assert_eq!(out.shape(), expected.shape());
            if max {
                assert_eq!(out.data(), expected.data(), "max seed {seed}");
            } else {
                // same summation order, so equality is exact
                for (a, b) in out.data().iter().zip(expected.data()) {
                    assert_eq!(a, b, "avg seed {seed}");
                }
            }
        }
    }
}

#[test]
fn f1_satisfies_both_forms_on_random_matrices() {
    let mut r = rng(1000);
    let mut checked = 0;
    for _ in 0..1000 {
        let cm = ConfusionMatrix {
            tp: r.gen_range(0..200),
            fp: r.gen_range(0..200),
            fn_: r.gen_range(0..200),
            tn: r.gen_range(0..200),
        };
        let rep = f1_from_confusion(&cm);
        if rep.degenerate {
            assert_eq!(rep.f1, 0.0);
            continue;
        }
        let (p, rc) = (cm.tp as f64 / (cm.tp + cm.fp) as f64, cm.tp as f64 / (cm.tp + cm.fn_) as f64);
        assert!((rep.f1 - 2.0 * p * rc / (p + rc)).abs() < 1e-12);
        assert!((2.0 / rep.f1 - (1.0 / p + 1.0 / rc)).abs() < 1e-12 * (2.0 / rep.f1));
        assert!(rep.f1 > 0.0 && rep.f1 <= 1.0);
        checked += 1;
    }
    assert!(checked > 900);
}

#[test]
fn confusion_matches_pair_tally() {
    let mut r = rng(7);
    let preds: Vec<usize> = (0..500).map(|_| r.gen_range(0..2)).collect();
    let labels: Vec<usize> = (0..500).map(|_| r.gen_range(0..2)).collect();
    let cm = confusion(&preds, &labels, 1).unwrap();
    let count = |p, y| preds.iter().zip(&labels).filter(|&(&a, &b)| a == p && b == y).count() as u64;
    assert_eq!(cm, ConfusionMatrix { tp: count(1, 1), fp: count(1, 0), fn_: count(0, 1), tn: count(0, 0) });
}
