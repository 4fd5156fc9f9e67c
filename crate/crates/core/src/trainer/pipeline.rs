//! Stage-by-stage training as driven by the command line: each stage is
//! trained on the training split and its threshold calibrated on a held-out
//! validation split.

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    assemble_stage1_samples, assemble_verify_samples, mine_hard_examples, train, EpochLog, MiningConfig,
    TrainConfig, TrainSample,
};
use crate::cascade::{dedup, stage1_proposals, verify_stage, VerifyConfig};
use crate::dataset::AnnotatedImage;
use crate::error::{Error, Result};
use crate::nn::{arch, init_weights, net_geometry, NetworkSpec};
use crate::pyramid::PyramidConfig;
use crate::score_map::{Proposal, ProposalConfig};
use crate::tensor::Tensor3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub stage1: TrainConfig,
    pub stage2: TrainConfig,
    pub stage3: TrainConfig,
    pub mining: MiningConfig,
    /// Mining rounds after the first fit of a verification stage.
    pub bootstrap_rounds: usize,
    /// Share of the plain samples mixed back into every mined set.
    pub replay_fraction: f64,
    /// Share of annotated images held out for calibration.
    pub validation_fraction: f64,
    /// Annotated images scanned per mining round.
    pub mining_images: usize,
    /// Recall of reachable faces each calibrated threshold must keep.
    pub target_recall: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let stage = |seed, epochs, counts: (usize, usize), jitter: (f64, f64), partial| TrainConfig {
            epochs,
            seed,
            target_counts: counts,
            neg_pos_ratio: counts.1 as f64 / counts.0 as f64,
            jitter_scale: jitter.0,
            jitter_shift: jitter.1,
            partial_fraction: partial,
            ..TrainConfig::default()
        };
        Self {
            stage1: stage(11, 6, (1200, 8000), (1.3, 0.25), 0.0),
            stage2: stage(12, 8, (800, 8000), (1.12, 0.06), 0.3),
            stage3: stage(13, 6, (500, 4000), (1.12, 0.06), 0.3),
            mining: MiningConfig::default(),
            bootstrap_rounds: 1,
            replay_fraction: 0.25,
            validation_fraction: 0.15,
            mining_images: 150,
            target_recall: 0.99,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        self.stage1.validate()?;
        self.stage2.validate()?;
        self.stage3.validate()?;
        if !(0.0..=1.0).contains(&self.replay_fraction) {
            return Err(Error::Config("replay_fraction must be in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must be in [0, 1)".into()));
        }
        if !(self.target_recall > 0.0 && self.target_recall <= 1.0) {
            return Err(Error::Config("target_recall must be in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn stage(&self, n: usize) -> &TrainConfig {
        match n {
            1 => &self.stage1,
            2 => &self.stage2,
            _ => &self.stage3,
        }
    }
}

/// Splits off the last `fraction` of the images (at least one when there
/// are two or more) as the validation set.
pub fn split_validation(annotated: &[AnnotatedImage], fraction: f64) -> (&[AnnotatedImage], &[AnnotatedImage]) {
    let n = annotated.len();
    let mut n_val = (n as f64 * fraction).round() as usize;
    if fraction > 0.0 && n >= 2 {
        n_val = n_val.clamp(1, n - 1);
    }
    annotated.split_at(n - n_val.min(n))
}

/// The already trained stages a new stage sits behind.
#[derive(Clone, Debug)]
pub struct PriorStages<'a> {
    pub stage1: &'a NetworkSpec,
    pub stage2: Option<(&'a NetworkSpec, f64)>,
    pub pyramid: &'a PyramidConfig,
    pub proposal: &'a ProposalConfig,
    pub verify: &'a VerifyConfig,
}

impl PriorStages<'_> {
    /// Proposals reaching the next stage.
    pub fn propose(&self, image: &Tensor3) -> Result<Vec<Proposal>> {
        let (_, p1) = stage1_proposals(image, self.stage1, self.pyramid, self.proposal)?;
        match self.stage2 {
            None => Ok(p1),
            Some((net, threshold)) => Ok(dedup(verify_stage(&p1, net, image, threshold, self.verify)?, self.verify.dedup_iou)),
        }
    }
}

pub struct StageOutcome {
    pub net: NetworkSpec,
    pub log: Vec<EpochLog>,
}

pub fn train_stage1(annotated: &[AnnotatedImage], backgrounds: &[Tensor3], cfg: &TrainConfig) -> Result<StageOutcome> {
    let mut net = arch::stage1();
    init_weights(&mut net, cfg.seed);
    let samples = assemble_stage1_samples(annotated, backgrounds, net_geometry(&net).window, cfg)?;
    info!("stage1: {} samples", samples.len());
    let (net, log) = train(&net, &samples, cfg)?;
    Ok(StageOutcome { net, log })
}

/// Fits a verification stage on plain padded samples, then refits it on
/// hard examples mined behind `prior`, mixed with a replay of plain samples.
pub fn train_verify_stage(
    stage: usize,
    prior: &PriorStages<'_>,
    annotated: &[AnnotatedImage],
    backgrounds: &[Tensor3],
    settings: &TrainSettings,
) -> Result<StageOutcome> {
    let cfg = settings.stage(stage);
    let mut net = arch::for_stage(stage).ok_or_else(|| Error::Config(format!("no stage {stage}")))?;
    init_weights(&mut net, cfg.seed);
    let window = net_geometry(&net).window;
    let plain = assemble_verify_samples(annotated, backgrounds, window, cfg)?;
    info!("stage{stage}: {} plain samples", plain.len());
    let (mut net, mut log) = train(&net, &plain, cfg)?;

    let n_mine = settings.mining_images.min(annotated.len());
    let n_bg = ((backgrounds.len() * n_mine).div_ceil(annotated.len().max(1))).min(backgrounds.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xb007);
    for round in 1..=settings.bootstrap_rounds {
        let mined = mine_hard_examples(
            &net,
            &annotated[..n_mine],
            &backgrounds[..n_bg],
            |img| prior.propose(img),
            prior.verify,
            &settings.mining,
        )?;
        let mut replay: Vec<&TrainSample> = plain.iter().collect();
        replay.shuffle(&mut rng);
        replay.truncate((plain.len() as f64 * settings.replay_fraction).round() as usize);
        let mut set: Vec<TrainSample> = mined;
        let n_mined = set.len();
        set.extend(replay.into_iter().cloned());
        info!("stage{stage} round {round}: {n_mined} mined + {} replayed", set.len() - n_mined);
        let round_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(round as u64),
            ..cfg.clone()
        };
        match train(&net, &set, &round_cfg) {
            Ok((n, l)) => {
                net = n;
                log.extend(l);
            }
            Err(Error::Sampling(msg)) => info!("stage{stage} round {round} skipped: {msg}"),
            Err(e) => return Err(e),
        }
    }
    Ok(StageOutcome { net, log })
}

/// Largest threshold keeping `target` of the given best scores, where a
/// `None` entry is a face no candidate reaches at any threshold.
fn threshold_for_recall(mut best: Vec<f64>, target: f64) -> f64 {
    if best.is_empty() {
        return 0.0;
    }
    best.sort_by(|a, b| b.total_cmp(a));
    let keep = ((target * best.len() as f64).ceil() as usize).clamp(1, best.len());
    best[keep - 1]
}

/// Best value of `key` over boxes matching each face at IoU 0.5 or more,
/// for the faces matched at all.
fn best_per_face(gts: &[crate::bbox::BBox], props: &[Proposal], key: impl Fn(&Proposal) -> f64) -> Vec<Option<f64>> {
    gts.iter()
        .map(|g| {
            props
                .iter()
                .filter(|p| p.bbox.iou(g) >= 0.5)
                .map(&key)
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    /// Faces some candidate reaches, over all faces.
    pub reachable: f64,
    /// Faces kept at the chosen threshold, over all faces.
    pub recall: f64,
}

impl Calibration {
    /// Threshold to deploy: the calibrated one, never above `ceiling`.
    /// Calibration only lowers a threshold to protect recall; it does not
    /// push it into the saturated tail of an overconfident net.
    pub fn capped(&self, ceiling: f64) -> f64 {
        self.threshold.min(ceiling)
    }
}

fn finish(best: Vec<Option<f64>>, target: f64) -> Calibration {
    let total = best.len().max(1) as f64;
    let reached: Vec<f64> = best.into_iter().flatten().collect();
    let threshold = threshold_for_recall(reached.clone(), target);
    let kept = reached.iter().filter(|&&v| v >= threshold).count();
    Calibration {
        threshold,
        reachable: reached.len() as f64 / total,
        recall: kept as f64 / total,
    }
}

/// Box-score threshold for stage-1 proposals. Raising the threshold only
/// drops proposals from the tail of the ranked list, so one run at zero
/// gives the recall of every threshold.
pub fn calibrate_proposals(
    net: &NetworkSpec,
    val: &[AnnotatedImage],
    pyramid: &PyramidConfig,
    proposal: &ProposalConfig,
    target: f64,
) -> Result<Calibration> {
    let open = ProposalConfig {
        threshold: 0.0,
        ..proposal.clone()
    };
    let mut best = Vec::new();
    for a in val {
        let (_, props) = stage1_proposals(&a.image, net, pyramid, &open)?;
        best.extend(best_per_face(&a.boxes, &props, |p| p.omega));
    }
    Ok(finish(best, target))
}

/// Score threshold of a verification stage behind `prior`.
pub fn calibrate_stage(
    net: &NetworkSpec,
    prior: &PriorStages<'_>,
    val: &[AnnotatedImage],
    target: f64,
) -> Result<Calibration> {
    let mut best = Vec::new();
    for a in val {
        let incoming = prior.propose(&a.image)?;
        let out = dedup(verify_stage(&incoming, net, &a.image, 0.0, prior.verify)?, prior.verify.dedup_iou);
        best.extend(best_per_face(&a.boxes, &out, |p| p.score));
    }
    Ok(finish(best, target))
}
