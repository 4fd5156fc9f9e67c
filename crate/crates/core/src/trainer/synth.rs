//! Procedural training data: textured scenes with planted face patterns.
//!
//! A face is a dark outline disc holding a bright inner disc with two dark
//! eyes and a mouth. Scenes also carry look-alike distractors (featureless
//! discs, rings, lone eye pairs, rectangles) so that the detector has to key
//! on the inner structure rather than on a bright blob.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::dataset::AnnotatedImage;
use crate::tensor::Tensor3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    /// Inclusive range of planted faces per annotated image.
    pub faces_per_image: (usize, usize),
    /// Face side range in pixels, sampled log-uniformly.
    pub face_side: (f64, f64),
    pub distractors_per_image: (usize, usize),
    /// Face-free images generated per annotated image.
    pub background_ratio: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            width: 256,
            height: 192,
            faces_per_image: (1, 3),
            face_side: (30.0, 120.0),
            distractors_per_image: (2, 6),
            background_ratio: 0.2,
        }
    }
}

/// Stream ids keep image `i` identical whatever the requested count.
const BACKGROUND_STREAM: u64 = 1 << 40;

/// Generates `n_images` annotated scenes and about `background_ratio * n_images`
/// face-free scenes, deterministically from `seed`.
pub fn synth_dataset(seed: u64, n_images: usize, params: &SynthParams) -> (Vec<AnnotatedImage>, Vec<Tensor3>) {
    let annotated = (0..n_images)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let (image, boxes) = scene(&mut rng, params, true);
            AnnotatedImage {
                id: format!("img{i:05}"),
                image,
                boxes,
            }
        })
        .collect();
    let n_bg = ((n_images as f64 * params.background_ratio).round() as usize).max(1);
    let backgrounds = (0..n_bg)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(BACKGROUND_STREAM + i as u64);
            scene(&mut rng, params, false).0
        })
        .collect();
    (annotated, backgrounds)
}

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<[f64; 3]>,
}

impl Canvas {
    /// Alpha-blends `color` over an axis-aligned ellipse with a one-pixel soft edge.
    fn ellipse(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, color: [f64; 3]) {
        self.annulus(cx, cy, rx, ry, 0.0, color);
    }

    /// Ellipse minus a concentric hole of relative radius `hole`.
    fn annulus(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, hole: f64, color: [f64; 3]) {
        let x0 = ((cx - rx - 1.0).floor().max(0.0)) as usize;
        let y0 = ((cy - ry - 1.0).floor().max(0.0)) as usize;
        let x1 = ((cx + rx + 1.0).ceil().max(0.0) as usize).min(self.w);
        let y1 = ((cy + ry + 1.0).ceil().max(0.0) as usize).min(self.h);
        let soft = rx.min(ry).max(1.0);
        for y in y0..y1 {
            for x in x0..x1 {
                let dx = (x as f64 + 0.5 - cx) / rx;
                let dy = (y as f64 + 0.5 - cy) / ry;
                let d = (dx * dx + dy * dy).sqrt();
                let outer = ((1.0 - d) * soft + 0.5).clamp(0.0, 1.0);
                let inner = if hole > 0.0 {
                    ((hole - d) * soft + 0.5).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let a = (outer - inner).max(0.0);
                if a > 0.0 {
                    let p = &mut self.px[y * self.w + x];
                    for c in 0..3 {
                        p[c] += (color[c] - p[c]) * a;
                    }
                }
            }
        }
    }

    fn rect(&mut self, b: &BBox, color: [f64; 3]) {
        let (x0, y0, x1, y1) = b.pixel_rect(self.w, self.h);
        for y in y0..y1 {
            for x in x0..x1 {
                self.px[y * self.w + x] = color;
            }
        }
    }

    fn into_tensor(self) -> Tensor3 {
        // quantize to 8 bits so in-memory scenes equal what a PPM round trip yields
        let (w, h) = (self.w, self.h);
        Tensor3::from_fn(w, h, 3, |x, y, c| (self.px[y * w + x][c].clamp(0.0, 1.0) * 255.0).round() / 255.0)
    }
}

fn texture(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Canvas {
    let base: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.15..0.8));
    let grad: [[f64; 2]; 3] = std::array::from_fn(|_| [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)]);
    let waves: Vec<(f64, f64, f64, f64, [f64; 3])> = (0..3)
        .map(|_| {
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let freq = std::f64::consts::TAU / rng.gen_range(20.0..120.0);
            let amp = rng.gen_range(0.04..0.12);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let tint = std::array::from_fn(|_| rng.gen_range(0.5..1.0));
            (angle.cos() * freq, angle.sin() * freq, amp, phase, tint)
        })
        .collect();
    let mut px = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (x as f64 / w as f64 - 0.5, y as f64 / h as f64 - 0.5);
            let mut p = [0.0; 3];
            for c in 0..3 {
                p[c] = base[c] + grad[c][0] * u + grad[c][1] * v;
            }
            for &(kx, ky, amp, phase, tint) in &waves {
                let s = amp * (kx * x as f64 + ky * y as f64 + phase).sin();
                for c in 0..3 {
                    p[c] += s * tint[c];
                }
            }
            for v in &mut p {
                *v += rng.gen_range(-0.04..0.04);
            }
            px.push(p);
        }
    }
    Canvas { w, h, px }
}

fn dark(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let g = rng.gen_range(0.0..0.2);
    std::array::from_fn(|_| g + rng.gen_range(0.0..0.06))
}

fn bright(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.gen_range(0.75..0.97), rng.gen_range(0.6..0.9), rng.gen_range(0.5..0.85)]
}

fn any_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    std::array::from_fn(|_| rng.gen_range(0.0..1.0))
}

fn face(canvas: &mut Canvas, rng: &mut ChaCha8Rng, b: &BBox) {
    let (cx, cy) = b.center();
    let r = b.w / 2.0;
    let j = |rng: &mut ChaCha8Rng| rng.gen_range(-0.04..0.04) * r;
    canvas.ellipse(cx, cy, r, r, dark(rng));
    canvas.ellipse(cx, cy, 0.85 * r, 0.85 * r, bright(rng));
    let eye = dark(rng);
    let (ex, ey) = (0.34 * r + j(rng), -0.18 * r + j(rng));
    let (erx, ery) = (0.13 * r, 0.11 * r);
    canvas.ellipse(cx - ex, cy + ey, erx, ery, eye);
    canvas.ellipse(cx + ex, cy + ey, erx, ery, eye);
    canvas.ellipse(cx + j(rng), cy + 0.42 * r + j(rng), 0.3 * r, 0.07 * r, dark(rng));
}

fn distractor(canvas: &mut Canvas, rng: &mut ChaCha8Rng, b: &BBox) {
    let (cx, cy) = b.center();
    let r = b.w / 2.0;
    match rng.gen_range(0..5) {
        // featureless head
        0 => {
            canvas.ellipse(cx, cy, r, r, dark(rng));
            canvas.ellipse(cx, cy, 0.85 * r, 0.85 * r, bright(rng));
        }
        1 => canvas.annulus(cx, cy, r, r, rng.gen_range(0.6..0.9), any_color(rng)),
        // eyes without a head
        2 => {
            let eye = dark(rng);
            canvas.ellipse(cx - 0.34 * r, cy - 0.18 * r, 0.13 * r, 0.11 * r, eye);
            canvas.ellipse(cx + 0.34 * r, cy - 0.18 * r, 0.13 * r, 0.11 * r, eye);
        }
        // head with a single feature
        3 => {
            canvas.ellipse(cx, cy, 0.85 * r, 0.85 * r, bright(rng));
            let feature = dark(rng);
            if rng.gen_bool(0.5) {
                canvas.ellipse(cx, cy + 0.42 * r, 0.3 * r, 0.07 * r, feature);
            } else {
                canvas.ellipse(cx, cy - 0.1 * r, 0.2 * r, 0.18 * r, feature);
            }
        }
        _ => {
            let aspect = rng.gen_range(0.4..1.0);
            let inner = BBox::centered(cx, cy, b.w, b.h * aspect);
            canvas.rect(&inner, any_color(rng));
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn place(rng: &mut ChaCha8Rng, side: f64, w: usize, h: usize) -> BBox {
    let x = rng.gen_range(0.0..=(w as f64 - side)).floor();
    let y = rng.gen_range(0.0..=(h as f64 - side)).floor();
    BBox::new(x, y, side, side)
}

fn scene(rng: &mut ChaCha8Rng, p: &SynthParams, with_faces: bool) -> (Tensor3, Vec<BBox>) {
    let (w, h) = (p.width, p.height);
    let mut canvas = texture(rng, w, h);
    let max_side = p.face_side.1.min(w.min(h) as f64);
    let mut faces: Vec<BBox> = Vec::new();
    if with_faces {
        let want = rng.gen_range(p.faces_per_image.0..=p.faces_per_image.1);
        for _ in 0..want * 30 {
            if faces.len() == want {
                break;
            }
            let side = log_uniform(rng, p.face_side.0, max_side).round();
            let b = place(rng, side, w, h);
            if faces.iter().all(|f| f.scaled(1.1).intersection(&b).is_none()) {
                faces.push(b);
            }
        }
    }
    let n_distract = rng.gen_range(p.distractors_per_image.0..=p.distractors_per_image.1);
    let mut placed = 0;
    for _ in 0..n_distract * 20 {
        if placed == n_distract {
            break;
        }
        let side = log_uniform(rng, 20.0, (1.2 * max_side).min(w.min(h) as f64)).round();
        let b = place(rng, side, w, h);
        if faces.iter().all(|f| f.scaled(1.2).intersection(&b).is_none()) {
            distractor(&mut canvas, rng, &b);
            placed += 1;
        }
    }
    for b in &faces {
        face(&mut canvas, rng, b);
    }
    (canvas.into_tensor(), faces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let p = SynthParams::default();
        let a = synth_dataset(3, 4, &p);
        let b = synth_dataset(3, 4, &p);
        assert_eq!(a, b);
        let c = synth_dataset(4, 4, &p);
        assert_ne!(a.0[0].image, c.0[0].image);
    }

    #[test]
    fn image_i_does_not_depend_on_count() {
        let p = SynthParams::default();
        assert_eq!(synth_dataset(9, 2, &p).0[1], synth_dataset(9, 5, &p).0[1]);
    }

    #[test]
    fn boxes_respect_generator_contract() {
        let p = SynthParams::default();
        let (images, bgs) = synth_dataset(5, 30, &p);
        assert_eq!(bgs.len(), 6);
        for img in &images {
            assert!(!img.boxes.is_empty() && img.boxes.len() <= 3);
            for b in &img.boxes {
                assert!(b.within_image(p.width, p.height));
                assert!(b.w >= 30.0 && b.w <= 300.0 && b.w == b.h);
            }
            assert!(img.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
