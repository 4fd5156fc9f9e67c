mod common;

use std::collections::BTreeMap;

use common::oracles::{corner_iou, greedy_labels, metric_fixtures};
use fcn_cascade::eval::{adapt_box_for_ellipse_eval, evaluate, iou, match_detections, pr_curve, roc_curve, EvalRecord, ScoredBox};
use fcn_cascade::BBox;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn records(fixture: &[(f64, bool)]) -> Vec<EvalRecord> {
    fixture
        .iter()
        .enumerate()
        .map(|(i, &(confidence, tp))| EvalRecord {
            confidence,
            true_positive: tp,
            image: format!("img{}", i % 3),
            bbox: BBox::new(i as f64, 0.0, 4.0, 4.0),
            matched_gt: tp.then_some(i),
        })
        .collect()
}

fn fraction((num, den): (u64, u64)) -> f64 {
    num as f64 / den as f64
}

#[test]
fn fixtures_match_hand_enumeration() {
    for f in metric_fixtures() {
        let recs = records(&f.records);
        let ap = pr_curve(&recs, f.total_gt).summary;
        let auc = roc_curve(&recs, f.total_gt).summary;
        assert!((ap - fraction(f.ap)).abs() <= 1e-12, "{}: AP {ap} vs {:?}", f.name, f.ap);
        assert!((auc - fraction(f.auc)).abs() <= 1e-12, "{}: AUC {auc} vs {:?}", f.name, f.auc);
    }
}

#[test]
fn worked_iou_is_one_seventh() {
    assert_eq!(iou(&BBox::new(0.0, 0.0, 2.0, 2.0), &BBox::new(1.0, 1.0, 2.0, 2.0)), 1.0 / 7.0);
    assert_eq!(iou(&BBox::new(0.0, 0.0, 2.0, 2.0), &BBox::new(2.0, 0.0, 2.0, 2.0)), 0.0);
}

#[test]
fn worked_ellipse_adaptation() {
    let b = adapt_box_for_ellipse_eval(&BBox::new(100.0, 100.0, 40.0, 40.0), None, false);
    assert_eq!(b, BBox::new(100.0, 91.0, 40.0, 50.0));
}

fn random_box(rng: &mut impl Rng) -> [f64; 4] {
    [rng.gen_range(0.0..40.0), rng.gen_range(0.0..40.0), rng.gen_range(4.0..20.0), rng.gen_range(4.0..20.0)]
}

#[test]
fn greedy_matching_agrees_with_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..200 {
        let gts: Vec<[f64; 4]> = (0..rng.gen_range(0..6)).map(|_| random_box(&mut rng)).collect();
        let mut dets: Vec<(f64, [f64; 4])> = Vec::new();
        for _ in 0..rng.gen_range(0..10) {
            // near copies of a ground truth so that both outcomes are common
            let b = if !gts.is_empty() && rng.gen_bool(0.6) {
                let g = gts[rng.gen_range(0..gts.len())];
                [g[0] + rng.gen_range(-4.0..4.0), g[1] + rng.gen_range(-4.0..4.0), g[2] * rng.gen_range(0.7..1.4), g[3]]
            } else {
                random_box(&mut rng)
            };
            dets.push((rng.gen::<f64>(), b));
        }
        let expected = greedy_labels(&dets, &gts, 0.5);
        let scored: Vec<ScoredBox> = dets
            .iter()
            .map(|(c, b)| ScoredBox {
                bbox: BBox::new(b[0], b[1], b[2], b[3]),
                confidence: *c,
            })
            .collect();
        let gt_boxes: Vec<BBox> = gts.iter().map(|g| BBox::new(g[0], g[1], g[2], g[3])).collect();
        let recs = match_detections("a", &scored, &gt_boxes, 0.5);
        for r in &recs {
            let i = dets.iter().position(|(c, _)| *c == r.confidence).unwrap();
            assert_eq!(r.true_positive, expected[i], "case {case}, detection {i}");
        }
    }
}

#[test]
fn corner_iou_agrees_with_bbox_iou() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let (a, b) = (random_box(&mut rng), random_box(&mut rng));
        let fast = iou(&BBox::new(a[0], a[1], a[2], a[3]), &BBox::new(b[0], b[1], b[2], b[3]));
        assert!((fast - corner_iou(a, b)).abs() < 1e-12);
    }
}

#[test]
fn perfect_and_empty_detectors() {
    let gt = BBox::new(10.0, 10.0, 20.0, 20.0);
    let gts = BTreeMap::from([("a".to_string(), vec![gt]), ("b".to_string(), vec![gt])]);
    let perfect = gts
        .iter()
        .map(|(k, v)| (k.clone(), vec![ScoredBox { bbox: v[0], confidence: 0.9 }]))
        .collect();
    let (_, roc, s) = evaluate(&perfect, &gts, 0.5);
    assert_eq!((s.ap, s.auc, s.recall), (1.0, 1.0, 1.0));
    assert_eq!(roc.points.last().map(|p| (p.x, p.y)), Some((0.0, 1.0)));

    let (_, roc, s) = evaluate(&BTreeMap::new(), &gts, 0.5);
    assert_eq!((s.ap, s.auc, s.n_gt), (0.0, 0.0, 2));
    assert!(roc.points.iter().all(|p| p.y == 0.0));
}

fn arb_records() -> impl Strategy<Value = (Vec<(f64, bool)>, usize)> {
    (prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..40), 0usize..10).prop_map(|(recs, extra)| {
        let tps = recs.iter().filter(|r| r.1).count();
        (recs, tps + extra)
    })
}

proptest! {
    #[test]
    fn metrics_depend_only_on_rank((recs, total) in arb_records()) {
        prop_assume!(total > 0);
        let base = records(&recs);
        let squashed: Vec<(f64, bool)> = recs.iter().map(|&(c, t)| (c.powi(3) * 0.5 + 0.1, t)).collect();
        let moved = records(&squashed);
        prop_assert!((pr_curve(&base, total).summary - pr_curve(&moved, total).summary).abs() < 1e-12);
        prop_assert!((roc_curve(&base, total).summary - roc_curve(&moved, total).summary).abs() < 1e-12);
    }

    #[test]
    fn curves_are_monotone_and_summaries_bounded((recs, total) in arb_records()) {
        prop_assume!(total > 0);
        let r = records(&recs);
        let pr = pr_curve(&r, total);
        let roc = roc_curve(&r, total);
        prop_assert!(pr.points.windows(2).all(|w| w[0].x <= w[1].x));
        prop_assert!(roc.points.windows(2).all(|w| w[0].x <= w[1].x && w[0].y <= w[1].y));
        prop_assert!((0.0..=1.0).contains(&pr.summary));
        prop_assert!((0.0..=1.0).contains(&roc.summary));
    }
}
