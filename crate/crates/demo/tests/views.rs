use retina_demo::{f1_surface, feature_maps, kernel_names, sampler_mix, scores};

#[test]
fn identity_kernel_keeps_the_image() {
    let maps = feature_maps(false, 16, 3, "identity", true, 2).unwrap();
    assert_eq!((maps.size(), maps.conv_size(), maps.pool_size()), (16, 16, 8));
    assert_eq!(maps.input(), maps.conv());
    assert_eq!(maps.pool().len(), 64);
}

#[test]
fn max_pool_dominates_average_pool() {
    let max = feature_maps(true, 32, 1, "edge", true, 4).unwrap().pool();
    let avg = feature_maps(true, 32, 1, "edge", false, 4).unwrap().pool();
    assert!(max.iter().zip(&avg).all(|(m, a)| m >= a));
}

#[test]
fn rejects_bad_inputs() {
    assert!(feature_maps(false, 16, 0, "nope", true, 2).is_err());
    assert!(feature_maps(false, 16, 0, "blur", true, 0).is_err());
    assert!(sampler_mix(100, 1.5, 8, true, 0, 4).is_err());
    assert!(sampler_mix(100, 0.1, 1, true, 0, 4).is_err());
    assert_eq!(kernel_names().len(), 4);
}

#[test]
fn scores_and_surface_agree() {
    let s = scores(45, 5, 5, 0);
    assert!((s[3] - 0.9).abs() < 1e-12);
    assert_eq!(scores(0, 0, 10, 90)[4], 1.0);
    let grid = f1_surface(10);
    assert_eq!(grid.len(), 100);
    // diagonal: precision == recall == F1
    for i in 0..10 {
        assert!((grid[i * 10 + i] - (i + 1) as f64 / 10.0).abs() < 1e-12);
    }
}

#[test]
fn weighted_batches_are_balanced_on_average() {
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let uniform = mean(sampler_mix(1000, 0.1, 50, false, 9, 200).unwrap());
    let weighted = mean(sampler_mix(1000, 0.1, 50, true, 9, 200).unwrap());
    assert!((uniform - 0.1).abs() < 0.02, "{uniform}");
    assert!((weighted - 0.5).abs() < 0.03, "{weighted}");
}
