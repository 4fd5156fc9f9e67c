use fcn_cascade::nn::{arch, init_weights, net_forward, net_geometry};
use fcn_cascade::pyramid::{build_pyramid, level_dims, resize_bilinear, run_streams, PyramidConfig, ScaledImage};
use fcn_cascade::score_map::StreamGrid;
use fcn_cascade::{Error, Tensor3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(w: usize, h: usize, seed: u64) -> Tensor3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor3::from_fn(w, h, 3, |_, _, _| rng.gen_range(0.0..1.0))
}

#[test]
fn window_sized_level_gives_one_cell() {
    let mut net = arch::stage1();
    init_weights(&mut net, 3);
    let level = ScaledImage {
        tensor: noise(30, 30, 1),
        scale_factor: 1.0,
        original_size: (30, 30),
    };
    let levels = [level];
    let streams = run_streams(&net, &levels).unwrap();
    assert_eq!(streams.len(), 1);
    assert_eq!((streams[0].heatmap.width(), streams[0].heatmap.height()), (1, 1));
}

#[test]
fn undersized_levels_are_skipped_and_all_undersized_is_an_error() {
    let net = arch::stage1();
    let pyr = build_pyramid(&noise(100, 40, 2), &PyramidConfig::default()).unwrap();
    let streams = run_streams(&net, &pyr).unwrap();
    assert!(streams.iter().all(|s| s.level.tensor.height() >= 30));
    assert!(streams.len() < pyr.len());
    let tiny = build_pyramid(&noise(20, 20, 2), &PyramidConfig { target_long_edges: vec![20] }).unwrap();
    assert!(matches!(run_streams(&net, &tiny), Err(Error::EmptyPyramid)));
}

#[test]
fn effective_windows_span_30_to_300_on_a_600_image() {
    let net = arch::stage1();
    let g = net_geometry(&net);
    let pyr = build_pyramid(&noise(600, 450, 3), &PyramidConfig::default()).unwrap();
    let windows: Vec<f64> = pyr.iter().map(|l| g.window as f64 / l.scale_factor).collect();
    assert_eq!(windows.first().copied(), Some(30.0));
    assert!((windows.last().unwrap() - 300.0).abs() < 1e-9);
    assert!(windows.windows(2).all(|p| p[0] < p[1]));
}

#[test]
fn heatmap_cells_follow_geometry_on_every_level() {
    let mut net = arch::stage1();
    init_weights(&mut net, 4);
    let g = net_geometry(&net);
    let pyr = build_pyramid(&noise(257, 191, 5), &PyramidConfig::default()).unwrap();
    for s in run_streams(&net, &pyr).unwrap() {
        let (w, h) = (s.level.tensor.width(), s.level.tensor.height());
        assert_eq!((s.heatmap.width(), s.heatmap.height()), (g.cells_for(w), g.cells_for(h)));
        let grid = StreamGrid::new(g, s.level, &s.heatmap).unwrap();
        let (sx, sy) = grid.scales();
        assert!((grid.effective_window() - g.window as f64 / sx.min(sy)).abs() < 1e-12);
        // window / scale_factor within a pixel of the per-axis value
        assert!((g.window as f64 / s.level.scale_factor - g.window as f64 / sx).abs() <= 1.0);
    }
}

#[test]
fn streams_equal_sequential_per_level_forward() {
    let mut net = arch::stage1();
    init_weights(&mut net, 6);
    let pyr = build_pyramid(&noise(300, 200, 7), &PyramidConfig::default()).unwrap();
    let streams = run_streams(&net, &pyr).unwrap();
    let sequential: Vec<Tensor3> = pyr
        .iter()
        .filter(|l| l.tensor.height() >= 30)
        .map(|l| net_forward(&net, &l.tensor).unwrap())
        .collect();
    assert_eq!(streams.len(), sequential.len());
    for (s, h) in streams.iter().zip(&sequential) {
        assert_eq!(&s.heatmap, h);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn resizing_to_own_size_is_identity(w in 1usize..40, h in 1usize..40, seed in any::<u64>()) {
        let img = noise(w, h, seed);
        prop_assert_eq!(resize_bilinear(&img, w, h), img);
    }

    #[test]
    fn level_dims_keep_aspect(w in 8usize..2000, h in 8usize..2000, target in 20usize..800) {
        let (lw, lh) = level_dims(w, h, target);
        prop_assert_eq!(lw.max(lh), target);
        let expected = w.min(h) as f64 * target as f64 / w.max(h) as f64;
        prop_assert!((lw.min(lh) as f64 - expected).abs() <= 1.0);
    }

    #[test]
    fn resized_values_stay_in_input_range(w in 2usize..30, h in 2usize..30, tw in 1usize..60, th in 1usize..60, seed in any::<u64>()) {
        let img = noise(w, h, seed);
        let out = resize_bilinear(&img, tw, th);
        let (lo, hi) = img.data().iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        prop_assert!(out.data().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }
}
