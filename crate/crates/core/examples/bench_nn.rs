use std::time::Instant;
use fcn_cascade::nn::{arch, init_weights, net_backward, net_forward, CrossEntropy};
use fcn_cascade::pyramid::{build_pyramid, PyramidConfig};
use fcn_cascade::Tensor3;

fn main() {
    for stage in 1..=3 {
        let mut net = arch::for_stage(stage).unwrap();
        init_weights(&mut net, 1);
        let w = fcn_cascade::nn::net_geometry(&net).window;
        let x = Tensor3::from_fn(w, w, 3, |a, b, c| ((a * 3 + b * 5 + c) % 7) as f64 / 7.0);
        let t = Tensor3::filled(1, 1, 1, 1.0);
        let n = 2000;
        let s = Instant::now();
        for _ in 0..n {
            std::hint::black_box(net_backward(&net, &x, &t, CrossEntropy { scale: 1.0 }).unwrap());
        }
        println!("stage{stage} backward {:.1} us/sample", s.elapsed().as_secs_f64() * 1e6 / n as f64);
    }
    let mut net = arch::stage1();
    init_weights(&mut net, 1);
    let img = Tensor3::from_fn(256, 192, 3, |a, b, c| ((a * 3 + b * 5 + c) % 7) as f64 / 7.0);
    let pyr = build_pyramid(&img, &PyramidConfig::default()).unwrap();
    let s = Instant::now();
    for l in &pyr {
        std::hint::black_box(net_forward(&net, &l.tensor).unwrap());
    }
    println!("stage1 pyramid 256x192: {:.1} ms", s.elapsed().as_secs_f64() * 1e3);
    let img = Tensor3::from_fn(600, 450, 3, |a, b, c| ((a * 3 + b * 5 + c) % 7) as f64 / 7.0);
    let s = Instant::now();
    let pyr = build_pyramid(&img, &PyramidConfig::default()).unwrap();
    for l in &pyr {
        std::hint::black_box(net_forward(&net, &l.tensor).unwrap());
    }
    println!("stage1 pyramid 600x450: {:.1} ms", s.elapsed().as_secs_f64() * 1e3);
}
