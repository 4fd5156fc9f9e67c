use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SampleKind, TrainConfig, TrainSample};
use crate::bbox::BBox;
use crate::cascade::{crop_patch, CONTEXT_PAD};
use crate::dataset::AnnotatedImage;
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

const MAX_TRIES: usize = 200;

fn check_inputs(annotated: &[AnnotatedImage], backgrounds: &[Tensor3], cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if annotated.iter().all(|a| a.boxes.is_empty()) {
        return Err(Error::Sampling("no annotated face to use as a positive".into()));
    }
    if backgrounds.is_empty() {
        return Err(Error::Sampling("at least one background image is required".into()));
    }
    Ok(())
}

/// Ground-truth boxes in dataset order, at most `target_counts.0` of them
/// (a seeded subset). With jitter on, faces are reused in turn up to the
/// target and every crop box is randomly rescaled and shifted.
fn pick_positives(annotated: &[AnnotatedImage], cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Vec<(usize, BBox)> {
    let limit = cfg.target_counts.0;
    let mut all: Vec<(usize, BBox)> = annotated
        .iter()
        .enumerate()
        .flat_map(|(i, a)| a.boxes.iter().map(move |b| (i, *b)))
        .collect();
    if all.len() > limit {
        all.shuffle(rng);
        all.truncate(limit);
        all.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.tie_order(&b.1)));
    }
    if !cfg.jitters() {
        return all;
    }
    let n = all.len();
    (0..limit.max(n))
        .map(|k| {
            let (i, b) = all[k % n];
            (i, jitter(rng, &b, cfg))
        })
        .collect()
}

fn jitter(rng: &mut ChaCha8Rng, b: &BBox, cfg: &TrainConfig) -> BBox {
    let log_j = cfg.jitter_scale.ln();
    let factor = if log_j > 0.0 { rng.gen_range(-log_j..=log_j).exp() } else { 1.0 };
    let side_w = b.w * factor;
    let side_h = b.h * factor;
    let s = cfg.jitter_shift;
    let (dx, dy) = if s > 0.0 { (rng.gen_range(-s..=s) * b.w, rng.gen_range(-s..=s) * b.h) } else { (0.0, 0.0) };
    let (cx, cy) = b.center();
    BBox::centered(cx + dx, cy + dy, side_w, side_h)
}

fn negative_count(n_pos: usize, cfg: &TrainConfig) -> usize {
    (n_pos as f64 * cfg.neg_pos_ratio).round() as usize
}

fn max_iou(b: &BBox, gts: &[BBox]) -> f64 {
    gts.iter().map(|g| g.iou(b)).fold(0.0, f64::max)
}

/// Random square with side log-uniform in `[min_side, short edge]`.
fn random_square(rng: &mut ChaCha8Rng, w: usize, h: usize, min_side: f64) -> BBox {
    let short = w.min(h) as f64;
    let lo = min_side.min(short);
    let side = if short > lo { rng.gen_range(lo.ln()..=short.ln()).exp().floor() } else { lo };
    let x = rng.gen_range(0.0..=(w as f64 - side)).floor();
    let y = rng.gen_range(0.0..=(h as f64 - side)).floor();
    BBox::new(x, y, side, side)
}

/// Square on a face image overlapping no face by IoU 0.1 or more.
fn face_free_square(rng: &mut ChaCha8Rng, img: &AnnotatedImage, min_side: f64) -> Option<BBox> {
    (0..MAX_TRIES)
        .map(|_| random_square(rng, img.image.width(), img.image.height(), min_side))
        .find(|b| max_iou(b, &img.boxes) < 0.1)
}

/// Box sharing IoU in `[0.1, 0.3]` with some face of `img`.
fn partial_overlap(rng: &mut ChaCha8Rng, img: &AnnotatedImage) -> Option<BBox> {
    for _ in 0..MAX_TRIES {
        let g = img.boxes[rng.gen_range(0..img.boxes.len())];
        let side = g.w * rng.gen_range(0.7..1.4);
        let (cx, cy) = g.center();
        let b = BBox::centered(
            cx + rng.gen_range(-1.2..1.2) * side,
            cy + rng.gen_range(-1.2..1.2) * side,
            side,
            side,
        );
        let iou = max_iou(&b, &img.boxes);
        if (0.1..=0.3).contains(&iou) {
            return Some(b);
        }
    }
    None
}

/// Box cutting into some face of `img` while sharing IoU of at most 0.3
/// with every face: face parts, off-center and oversized windows.
fn face_part(rng: &mut ChaCha8Rng, img: &AnnotatedImage) -> Option<BBox> {
    for _ in 0..MAX_TRIES {
        let g = img.boxes[rng.gen_range(0..img.boxes.len())];
        let side = g.w * rng.gen_range(0.3f64.ln()..1.5f64.ln()).exp();
        let (cx, cy) = g.center();
        let b = BBox::centered(
            cx + rng.gen_range(-0.8..0.8) * g.w,
            cy + rng.gen_range(-0.8..0.8) * g.h,
            side,
            side,
        );
        let b = b.clamp_to(img.image.width(), img.image.height());
        if b.is_degenerate() || b.w < 0.8 * side || b.h < 0.8 * side {
            continue;
        }
        if b.intersection(&g).is_some() && max_iou(&b, &img.boxes) <= 0.3 {
            return Some(b);
        }
    }
    None
}

fn plain_negatives(
    annotated: &[AnnotatedImage],
    backgrounds: &[Tensor3],
    count: usize,
    window: usize,
    pad: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TrainSample>> {
    let with_faces: Vec<&AnnotatedImage> = annotated.iter().filter(|a| !a.boxes.is_empty()).collect();
    let min_side = 0.6 * window as f64;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let from_face_image = k % 2 == 1 && !with_faces.is_empty();
        let found = if from_face_image {
            let img = with_faces[rng.gen_range(0..with_faces.len())];
            face_free_square(rng, img, min_side).map(|b| (&img.image, img.id.clone(), b))
        } else {
            None
        };
        let (image, id, bbox) = match found {
            Some(f) => f,
            None => {
                let i = rng.gen_range(0..backgrounds.len());
                let bg = &backgrounds[i];
                if bg.width().min(bg.height()) < 1 {
                    return Err(Error::Sampling("empty background image".into()));
                }
                (bg, format!("bg{i:05}"), random_square(rng, bg.width(), bg.height(), min_side))
            }
        };
        out.push(TrainSample {
            patch: crop_patch(image, &bbox.scaled(pad), window),
            label: 0,
            kind: SampleKind::Plain,
            image: id,
            bbox,
        });
    }
    Ok(out)
}

/// Proposal-stage samples: ground-truth crops as positives; face parts and
/// random squares with IoU < 0.1 against every face as negatives, the
/// latter half from face-free images.
pub fn assemble_stage1_samples(
    annotated: &[AnnotatedImage],
    backgrounds: &[Tensor3],
    window: usize,
    cfg: &TrainConfig,
) -> Result<Vec<TrainSample>> {
    check_inputs(annotated, backgrounds, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let positives = pick_positives(annotated, cfg, &mut rng);
    let mut samples: Vec<TrainSample> = positives
        .iter()
        .map(|&(i, b)| TrainSample {
            patch: crop_patch(&annotated[i].image, &b, window),
            label: 1,
            kind: SampleKind::Plain,
            image: annotated[i].id.clone(),
            bbox: b,
        })
        .collect();
    let n_neg = negative_count(samples.len(), cfg);
    let with_faces: Vec<&AnnotatedImage> = annotated.iter().filter(|a| !a.boxes.is_empty()).collect();
    let n_parts = (n_neg as f64 * cfg.partial_fraction).round() as usize;
    for _ in 0..n_parts {
        let img = with_faces[rng.gen_range(0..with_faces.len())];
        if let Some(b) = face_part(&mut rng, img) {
            samples.push(TrainSample {
                patch: crop_patch(&img.image, &b, window),
                label: 0,
                kind: SampleKind::PartialOverlap,
                image: img.id.clone(),
                bbox: b,
            });
        }
    }
    let remaining = n_neg - (samples.len() - positives.len());
    samples.extend(plain_negatives(annotated, backgrounds, remaining, window, 1.0, &mut rng)?);
    Ok(samples)
}

/// Verification-stage samples before any mining: context-padded crops of
/// faces, of boxes partially overlapping faces and of face-free boxes.
pub fn assemble_verify_samples(
    annotated: &[AnnotatedImage],
    backgrounds: &[Tensor3],
    window: usize,
    cfg: &TrainConfig,
) -> Result<Vec<TrainSample>> {
    check_inputs(annotated, backgrounds, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let positives = pick_positives(annotated, cfg, &mut rng);
    let mut samples: Vec<TrainSample> = positives
        .iter()
        .map(|&(i, b)| TrainSample {
            patch: crop_patch(&annotated[i].image, &b.scaled(CONTEXT_PAD), window),
            label: 1,
            kind: SampleKind::Plain,
            image: annotated[i].id.clone(),
            bbox: b,
        })
        .collect();
    let n_neg = negative_count(samples.len(), cfg);
    let with_faces: Vec<&AnnotatedImage> = annotated.iter().filter(|a| !a.boxes.is_empty()).collect();
    let n_partial = (n_neg as f64 * cfg.partial_fraction).round() as usize;
    for _ in 0..n_partial {
        let img = with_faces[rng.gen_range(0..with_faces.len())];
        if let Some(b) = partial_overlap(&mut rng, img) {
            samples.push(TrainSample {
                patch: crop_patch(&img.image, &b.scaled(CONTEXT_PAD), window),
                label: 0,
                kind: SampleKind::PartialOverlap,
                image: img.id.clone(),
                bbox: b,
            });
        }
    }
    let remaining = n_neg - (samples.len() - positives.len());
    samples.extend(plain_negatives(annotated, backgrounds, remaining, window, CONTEXT_PAD, &mut rng)?);
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::synth::{synth_dataset, SynthParams};

    fn data() -> (Vec<AnnotatedImage>, Vec<Tensor3>) {
        synth_dataset(2, 12, &SynthParams::default())
    }

    #[test]
    fn stage1_counts_follow_ratio_and_seed() {
        let (ann, bgs) = data();
        let cfg = TrainConfig {
            target_counts: (15, 200),
            neg_pos_ratio: 200.0 / 15.0,
            ..TrainConfig::default()
        };
        let s = assemble_stage1_samples(&ann, &bgs, 30, &cfg).unwrap();
        let pos = s.iter().filter(|x| x.is_face()).count();
        let neg = s.len() - pos;
        assert_eq!(pos, 15);
        assert!((neg as f64 / pos as f64 - cfg.neg_pos_ratio).abs() / cfg.neg_pos_ratio <= 0.01);
        assert!(s.iter().all(|x| x.patch.width() == 30 && x.patch.height() == 30));
        assert_eq!(s, assemble_stage1_samples(&ann, &bgs, 30, &cfg).unwrap());
    }

    #[test]
    fn stage1_negatives_avoid_faces() {
        let (ann, bgs) = data();
        let s = assemble_stage1_samples(&ann, &bgs, 30, &TrainConfig::default()).unwrap();
        for x in s.iter().filter(|x| !x.is_face()) {
            if let Some(img) = ann.iter().find(|a| a.id == x.image) {
                let limit = if x.kind == SampleKind::PartialOverlap { 0.3 } else { 0.1 };
                assert!(max_iou(&x.bbox, &img.boxes) <= limit);
            }
        }
    }

    #[test]
    fn verify_samples_include_partial_overlaps() {
        let (ann, bgs) = data();
        let s = assemble_verify_samples(&ann, &bgs, 34, &TrainConfig::default()).unwrap();
        let partial: Vec<_> = s.iter().filter(|x| x.kind == SampleKind::PartialOverlap).collect();
        assert!(!partial.is_empty());
        for x in partial {
            let img = ann.iter().find(|a| a.id == x.image).unwrap();
            let iou = max_iou(&x.bbox, &img.boxes);
            assert!((0.1..=0.3).contains(&iou) && x.label == 0);
        }
    }

    #[test]
    fn missing_inputs_are_errors() {
        let (ann, _) = data();
        assert!(assemble_stage1_samples(&ann, &[], 30, &TrainConfig::default()).is_err());
    }
}
