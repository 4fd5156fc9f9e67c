use serde::{Deserialize, Serialize};

use super::{SampleKind, TrainSample};
use crate::bbox::BBox;
use crate::cascade::{crop_patch, crop_score, verify_stage, VerifyConfig, CONTEXT_PAD};
use crate::dataset::AnnotatedImage;
use crate::error::Result;
use crate::nn::{net_geometry, NetworkSpec};
use crate::score_map::Proposal;
use crate::tensor::Tensor3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiningConfig {
    /// Score cut of the stage being trained.
    pub threshold: f64,
    /// IoU from which a box counts as containing a face.
    pub positive_iou: f64,
    /// IoU below which a box counts as background.
    pub negative_iou: f64,
    /// Inclusive IoU band whose boxes always join the negatives.
    pub partial_band: (f64, f64),
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            positive_iou: 0.5,
            negative_iou: 0.1,
            partial_band: (0.1, 0.3),
        }
    }
}

/// Kind and label of a mined box, or `None` when it falls outside every rule.
pub fn classify_mined(max_iou: f64, score: f64, cfg: &MiningConfig) -> Option<(SampleKind, u8)> {
    if max_iou >= cfg.positive_iou && score < cfg.threshold {
        Some((SampleKind::HardPositive, 1))
    } else if max_iou >= cfg.partial_band.0 && max_iou <= cfg.partial_band.1 {
        Some((SampleKind::PartialOverlap, 0))
    } else if max_iou < cfg.negative_iou && score >= cfg.threshold {
        Some((SampleKind::HardNegative, 0))
    } else {
        None
    }
}

/// Runs the earlier stages (`proposer`) and the stage being trained over
/// every image and keeps the boxes the current net gets wrong, plus boxes
/// that only partly overlap a face. Candidate boxes are the incoming
/// proposals and where this stage's search would move them.
pub fn mine_hard_examples(
    net: &NetworkSpec,
    annotated: &[AnnotatedImage],
    backgrounds: &[Tensor3],
    mut proposer: impl FnMut(&Tensor3) -> Result<Vec<Proposal>>,
    verify: &VerifyConfig,
    cfg: &MiningConfig,
) -> Result<Vec<TrainSample>> {
    let window = net_geometry(net).window;
    let bg_ids: Vec<String> = (0..backgrounds.len()).map(|i| format!("bg{i:05}")).collect();
    let no_faces: Vec<BBox> = Vec::new();
    let sources = annotated
        .iter()
        .map(|a| (&a.image, &a.id, &a.boxes))
        .chain(backgrounds.iter().zip(&bg_ids).map(|(img, id)| (img, id, &no_faces)));
    let mut out = Vec::new();
    for (image, id, gts) in sources {
        let proposals = proposer(image)?;
        let refined = verify_stage(&proposals, net, image, 0.0, verify)?;
        let mut boxes: Vec<BBox> = proposals.iter().chain(&refined).map(|p| p.bbox).collect();
        boxes.sort_by(|a, b| a.tie_order(b));
        boxes.dedup();
        for b in boxes {
            let iou = gts.iter().map(|g| g.iou(&b)).fold(0.0, f64::max);
            let score = crop_score(image, net, &b)?;
            if let Some((kind, label)) = classify_mined(iou, score, cfg) {
                out.push(TrainSample {
                    patch: crop_patch(image, &b.scaled(CONTEXT_PAD), window),
                    label,
                    kind,
                    image: id.clone(),
                    bbox: b,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mining_rules_partition() {
        let cfg = MiningConfig::default();
        assert_eq!(classify_mined(0.2, 0.9, &cfg), Some((SampleKind::PartialOverlap, 0)));
        assert_eq!(classify_mined(0.2, 0.1, &cfg), Some((SampleKind::PartialOverlap, 0)));
        assert_eq!(classify_mined(0.05, 0.1, &cfg), None);
        assert_eq!(classify_mined(0.05, 0.6, &cfg), Some((SampleKind::HardNegative, 0)));
        assert_eq!(classify_mined(0.7, 0.2, &cfg), Some((SampleKind::HardPositive, 1)));
        assert_eq!(classify_mined(0.7, 0.8, &cfg), None);
        assert_eq!(classify_mined(0.4, 0.8, &cfg), None);
    }
}
