//! Brute-force reference implementations. Nothing here calls into the
//! optimised code paths it is used to check.
#![allow(dead_code)]

use fcn_cascade::nn::{LayerKind, LayerSpec, NetworkSpec};
use fcn_cascade::Tensor3;
use rand::Rng;

/// Six nested loops over (oy, ox, co, ci, ky, kx) with zero padding.
pub fn naive_conv(input: &Tensor3, layer: &LayerSpec) -> Tensor3 {
    let (k, s, p) = (layer.kernel as isize, layer.stride as isize, layer.padding as isize);
    let (iw, ih) = (input.width() as isize, input.height() as isize);
    let ow = ((iw + 2 * p - k) / s + 1) as usize;
    let oh = ((ih + 2 * p - k) / s + 1) as usize;
    let (cin, cout) = (layer.in_channels, layer.out_channels);
    let mut out = Tensor3::zeros(ow, oh, cout);
    for oy in 0..oh as isize {
        for ox in 0..ow as isize {
            for co in 0..cout {
                let mut acc = layer.biases[co];
                for ci in 0..cin {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = oy * s + ky - p;
                            let ix = ox * s + kx - p;
                            if iy < 0 || iy >= ih || ix < 0 || ix >= iw {
                                continue;
                            }
                            let w = layer.weights
                                [(((ky * k + kx) as usize) * cin + ci) * cout + co];
                            acc += w * input.get(ix as usize, iy as usize, ci);
                        }
                    }
                }
                out.set(ox as usize, oy as usize, co, acc);
            }
        }
    }
    out
}

/// Window maximum by explicit enumeration; zero padding takes part.
pub fn naive_maxpool(input: &Tensor3, layer: &LayerSpec) -> Tensor3 {
    let (k, s, p) = (layer.kernel as isize, layer.stride as isize, layer.padding as isize);
    let (iw, ih) = (input.width() as isize, input.height() as isize);
    let ow = ((iw + 2 * p - k) / s + 1) as usize;
    let oh = ((ih + 2 * p - k) / s + 1) as usize;
    let mut out = Tensor3::zeros(ow, oh, input.depth());
    for oy in 0..oh as isize {
        for ox in 0..ow as isize {
            for c in 0..input.depth() {
                let mut best = f64::NEG_INFINITY;
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = oy * s + ky - p;
                        let ix = ox * s + kx - p;
                        let v = if iy < 0 || iy >= ih || ix < 0 || ix >= iw {
                            0.0
                        } else {
                            input.get(ix as usize, iy as usize, c)
                        };
                        best = best.max(v);
                    }
                }
                out.set(ox as usize, oy as usize, c, best);
            }
        }
    }
    out
}

/// Forward pass built from the naive layers. Returns the logits and the
/// sign pattern of every ReLU input.
pub fn naive_forward(net: &NetworkSpec, input: &Tensor3) -> (Tensor3, Vec<u64>) {
    let mut x = input.clone();
    let mut pattern = Vec::new();
    for layer in &net.layers {
        x = match layer.kind {
            LayerKind::Conv | LayerKind::FullyConvHead => naive_conv(&x, layer),
            LayerKind::MaxPool => naive_maxpool(&x, layer),
            LayerKind::Relu => {
                pattern.extend(x.data().iter().map(|&v| (v > 0.0) as u64));
                x.map(|v| v.max(0.0))
            }
        };
    }
    (x, pattern)
}

pub fn naive_loss(net: &NetworkSpec, input: &Tensor3, targets: &Tensor3) -> (f64, Vec<u64>) {
    let (logits, pattern) = naive_forward(net, input);
    let n = logits.data().len() as f64;
    let loss = logits
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&z, &y)| {
            let p = 1.0 / (1.0 + (-z).exp());
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n;
    (loss, pattern)
}

fn max_pool_winners(net: &NetworkSpec, input: &Tensor3) -> Vec<usize> {
    // index of the arg-max inside each pooling window, for kink detection
    let mut x = input.clone();
    let mut winners = Vec::new();
    for layer in &net.layers {
        if layer.kind == LayerKind::MaxPool {
            let (k, s, p) = (layer.kernel as isize, layer.stride as isize, layer.padding as isize);
            let (iw, ih) = (x.width() as isize, x.height() as isize);
            let ow = (iw + 2 * p - k) / s + 1;
            let oh = (ih + 2 * p - k) / s + 1;
            for oy in 0..oh {
                for ox in 0..ow {
                    for c in 0..x.depth() {
                        let mut best = (f64::NEG_INFINITY, 0usize);
                        for ky in 0..k {
                            for kx in 0..k {
                                let (iy, ix) = (oy * s + ky - p, ox * s + kx - p);
                                let v = if iy < 0 || iy >= ih || ix < 0 || ix >= iw {
                                    0.0
                                } else {
                                    x.get(ix as usize, iy as usize, c)
                                };
                                if v > best.0 {
                                    best = (v, (ky * k + kx) as usize);
                                }
                            }
                        }
                        winners.push(best.1);
                    }
                }
            }
        }
        x = match layer.kind {
            LayerKind::Conv | LayerKind::FullyConvHead => naive_conv(&x, layer),
            LayerKind::MaxPool => naive_maxpool(&x, layer),
            LayerKind::Relu => x.map(|v| v.max(0.0)),
        };
    }
    winners
}

fn linear_piece(net: &NetworkSpec, input: &Tensor3) -> (Vec<u64>, Vec<usize>) {
    let (_, relu) = naive_forward(net, input);
    (relu, max_pool_winners(net, input))
}

/// Central finite difference of the mean cross-entropy for every parameter,
/// in `Gradients::iter` order. Starts at `eps`; when the perturbation moves
/// the network onto another linear piece (a ReLU or pool winner flips) the
/// step is shrunk until both sides stay on the current piece.
pub fn finite_difference_grads(net: &NetworkSpec, input: &Tensor3, targets: &Tensor3, eps: f64) -> Vec<f64> {
    let base_piece = linear_piece(net, input);
    let mut out = Vec::new();
    for li in 0..net.layers.len() {
        let n_w = net.layers[li].weights.len();
        let n_b = net.layers[li].biases.len();
        for (is_bias, count) in [(false, n_w), (true, n_b)] {
            for idx in 0..count {
                let eval = |delta: f64| {
                    let mut probe = net.clone();
                    let slot = if is_bias {
                        &mut probe.layers[li].biases[idx]
                    } else {
                        &mut probe.layers[li].weights[idx]
                    };
                    *slot += delta;
                    let loss = naive_loss(&probe, input, targets).0;
                    (loss, linear_piece(&probe, input))
                };
                let mut h = eps;
                let grad = loop {
                    let (lp, pp) = eval(h);
                    let (lm, pm) = eval(-h);
                    if (pp == base_piece && pm == base_piece) || h < 1e-9 {
                        break (lp - lm) / (2.0 * h);
                    }
                    h /= 10.0;
                };
                out.push(grad);
            }
        }
    }
    out
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < 1e-10 {
        (a - b).abs()
    } else {
        (a - b).abs() / denom
    }
}

/// Traces the receptive field by lighting one input column at a time and
/// observing which heatmap columns change. Every parametric layer gets
/// all-ones weights and zero bias so a lit pixel reaches exactly the cells
/// whose field contains it. The two middle heatmap columns are read, and the
/// input is widened until a doubling no longer changes the answer, so that
/// padding at any layer's border cannot clip the traced field.
/// Returns `(stride, window, offset)`.
pub fn impulse_geometry(net: &NetworkSpec) -> (usize, usize, i64) {
    let mut probe = net.clone();
    for layer in &mut probe.layers {
        layer.weights.fill(1.0);
        layer.biases.fill(0.0);
    }
    let mut previous = None;
    let mut width = 32;
    loop {
        assert!(width <= 8192, "impulse tracing did not settle");
        let traced = trace_middle_pair(&probe, width);
        if let Some(geometry) = traced.filter(|_| traced == previous) {
            return geometry;
        }
        previous = traced;
        width *= 2;
    }
}

fn trace_middle_pair(probe: &NetworkSpec, width: usize) -> Option<(usize, usize, i64)> {
    let channels = probe.layers[0].in_channels;
    // smallest height that yields at least one heatmap row
    let height = (1..4 * width).find(|&h| probe.heatmap_dims(width, h).is_ok())?;
    let (cols, _) = probe.heatmap_dims(width, height).ok()?;
    if cols < 4 {
        return None;
    }
    let j = cols / 2 - 1;
    let (mut lo, mut hi) = ([usize::MAX; 2], [0usize; 2]);
    for x in 0..width {
        let input = Tensor3::from_fn(width, height, channels, |px, _, _| if px == x { 1.0 } else { 0.0 });
        let (logits, _) = naive_forward(probe, &input);
        for k in 0..2 {
            if (0..logits.height()).any(|i| logits.get(j + k, i, 0) > 0.0) {
                lo[k] = lo[k].min(x);
                hi[k] = hi[k].max(x);
            }
        }
    }
    if lo[0] == usize::MAX || lo[1] == usize::MAX || lo[0] == 0 || hi[1] == width - 1 {
        return None;
    }
    let stride = lo[1] - lo[0];
    let window = hi[0] - lo[0] + 1;
    let offset = lo[0] as i64 - (j * stride) as i64;
    Some((stride, window, offset))
}

/// A random valid stack of at most `max_hidden` hidden layers plus a head.
pub fn random_stack(rng: &mut impl Rng, max_hidden: usize, allow_padding: bool) -> NetworkSpec {
    let hidden = rng.gen_range(1..=max_hidden);
    let mut channels = rng.gen_range(1..=3);
    let first = channels;
    let mut layers = Vec::new();
    for _ in 0..hidden {
        match rng.gen_range(0..3) {
            0 => {
                let k = [1, 2, 3, 5][rng.gen_range(0..4)];
                let s = rng.gen_range(1..=2);
                let p = if allow_padding { rng.gen_range(0..k.min(3)) } else { 0 };
                let out = rng.gen_range(1..=3);
                layers.push(LayerSpec::conv(channels, out, k, s, p));
                channels = out;
            }
            1 => {
                let k = rng.gen_range(2..=3);
                let s = rng.gen_range(1..=k);
                let p = if allow_padding { rng.gen_range(0..=1) } else { 0 };
                layers.push(LayerSpec::max_pool(channels, k, s).with_padding(p));
            }
            _ => layers.push(LayerSpec::relu(channels)),
        }
    }
    let k = [1, 2, 3][rng.gen_range(0..3)];
    layers.push(LayerSpec::head(channels, k));
    let mut net = NetworkSpec::new("random", layers).expect("valid random stack");
    for layer in &mut net.layers {
        for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
            *w = rng.gen_range(-1.0..1.0);
        }
    }
    assert_eq!(net.layers[0].in_channels, first);
    net
}

pub fn random_tensor(rng: &mut impl Rng, w: usize, h: usize, d: usize) -> Tensor3 {
    Tensor3::from_fn(w, h, d, |_, _, _| rng.gen_range(-1.0..1.0))
}

/// Field of heatmap cell `cell` along one axis in original pixels, derived
/// from first principles: level field `[offset + cell*stride, +window)`
/// clipped to the level, both ends divided by the level/original ratio and
/// rounded, clipped to the image, widened to one pixel if empty.
pub fn field_span(cell: usize, stride: usize, window: usize, offset: i64, level_len: usize, orig_len: usize) -> (usize, usize) {
    let start = offset + (cell * stride) as i64;
    let lo = start.max(0).min(level_len as i64) as f64;
    let hi = (start + window as i64).max(0).min(level_len as i64) as f64;
    let ratio = level_len as f64 / orig_len as f64;
    let a = ((lo / ratio).round() as i64).max(0).min(orig_len as i64 - 1);
    let b = ((hi / ratio).round() as i64).min(orig_len as i64).max(a + 1);
    (a as usize, b as usize)
}

/// Per-pixel accumulation: for every original pixel, walk every cell and add
/// its score when the pixel lies in the cell's field.
pub fn brute_projection(
    heat: &Tensor3,
    stride: usize,
    window: usize,
    offset: i64,
    level: (usize, usize),
    orig: (usize, usize),
) -> (Vec<f64>, Vec<u32>) {
    let (w, h) = orig;
    let mut sum = vec![0.0; w * h];
    let mut cov = vec![0u32; w * h];
    for y in 0..h {
        for x in 0..w {
            for i in 0..heat.height() {
                let (y0, y1) = field_span(i, stride, window, offset, level.1, h);
                if y < y0 || y >= y1 {
                    continue;
                }
                for j in 0..heat.width() {
                    let (x0, x1) = field_span(j, stride, window, offset, level.0, w);
                    if x >= x0 && x < x1 {
                        sum[y * w + x] += heat.get(j, i, 0);
                        cov[y * w + x] += 1;
                    }
                }
            }
        }
    }
    (sum, cov)
}

/// Rectangle mass by double summation over `[x0, x1) x [y0, y1)`.
pub fn double_sum(values: &[f64], width: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
    let mut total = 0.0;
    for y in y0..y1 {
        for x in x0..x1 {
            total += values[y * width + x];
        }
    }
    total
}

/// Intersection over union of `[x, y, w, h]` boxes from corner arithmetic.
pub fn corner_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let ix = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let iy = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a[2] * a[3] + b[2] * b[3] - inter)
}

/// TP/FP label of each detection (in input order) under greedy matching:
/// visit detections from the highest confidence down; each one scans every
/// ground truth, takes the unclaimed one of highest IoU (first index on
/// ties) and counts as a true positive when that IoU reaches `thresh`.
pub fn greedy_labels(dets: &[(f64, [f64; 4])], gts: &[[f64; 4]], thresh: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].0.partial_cmp(&dets[a].0).unwrap());
    let mut claimed = vec![false; gts.len()];
    let mut labels = vec![false; dets.len()];
    for d in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if claimed[g] {
                continue;
            }
            let v = corner_iou(dets[d].1, *gt);
            if best.is_none() || v > best.unwrap().1 {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            if v >= thresh {
                claimed[g] = true;
                labels[d] = true;
            }
        }
    }
    labels
}

/// Ten scored detections already labelled TP/FP, with the AP and
/// normalised ROC AUC worked out by hand as exact fractions.
pub struct MetricFixture {
    pub name: &'static str,
    pub records: [(f64, bool); 10],
    pub total_gt: usize,
    pub ap: (u64, u64),
    pub auc: (u64, u64),
}

pub fn metric_fixtures() -> Vec<MetricFixture> {
    vec![
        // PR steps at ranks 1, 3, 4, 7: AP = (1 + 2/3 + 3/4 + 4/7) / 5 = 251/420.
        // ROC best TPR per FP count 0..5: .2 .6 .6 .8 .8 .8, area 3.8 over 6 FP.
        MetricFixture {
            name: "interleaved",
            records: [
                (1.0, true),
                (0.9, false),
                (0.8, true),
                (0.7, true),
                (0.6, false),
                (0.5, false),
                (0.4, true),
                (0.3, false),
                (0.2, false),
                (0.1, false),
            ],
            total_gt: 5,
            ap: (251, 420),
            auc: (19, 30),
        },
        // Tied confidences form one threshold step each.
        // Groups 0.9 / 0.8 / 0.6 / 0.5 add recall at precision 1/2, 2/3, 1/2, 1/2:
        // AP = (1/2 + 2/3 + 1/2 + 1/2) / 4 = 13/24.
        // ROC: TPR 0 at FP 0, .5 over FP 1..3, .75 over 3..4, 1 over 4..6: 3.75 / 6.
        MetricFixture {
            name: "tied",
            records: [
                (0.9, true),
                (0.9, false),
                (0.8, true),
                (0.7, false),
                (0.7, false),
                (0.6, true),
                (0.5, false),
                (0.5, true),
                (0.4, false),
                (0.3, false),
            ],
            total_gt: 4,
            ap: (13, 24),
            auc: (5, 8),
        },
        // Six hits first, two faces never found: AP = 6/8, ROC flat at .75.
        MetricFixture {
            name: "separated",
            records: [
                (0.95, true),
                (0.9, true),
                (0.85, true),
                (0.8, true),
                (0.75, true),
                (0.7, true),
                (0.4, false),
                (0.3, false),
                (0.2, false),
                (0.1, false),
            ],
            total_gt: 8,
            ap: (3, 4),
            auc: (3, 4),
        },
    ]
}
