//! Sample assembly, SGD training and hard-example mining.

mod mining;
mod pipeline;
mod samples;
mod sgd;
pub mod synth;

pub use mining::{classify_mined, mine_hard_examples, MiningConfig};
pub use pipeline::{
    calibrate_proposals, calibrate_stage, split_validation, train_stage1, train_verify_stage, Calibration, PriorStages,
    StageOutcome, TrainSettings,
};
pub use samples::{assemble_stage1_samples, assemble_verify_samples};
pub use sgd::{accuracy, train, EpochLog};
pub use synth::{synth_dataset, SynthParams};

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Factor applied to the learning rate once two thirds of the epochs have run.
    pub lr_decay: f64,
    pub neg_pos_ratio: f64,
    pub seed: u64,
    /// Upper bound on positives and the matching negative count.
    pub target_counts: (usize, usize),
    /// Largest side factor applied to a positive crop, drawn log-uniformly
    /// from `[1/j, j]`; 1 keeps crops tight.
    pub jitter_scale: f64,
    /// Largest center shift of a positive crop, as a fraction of its side.
    pub jitter_shift: f64,
    /// Share of the negatives cut from around faces rather than from
    /// face-free regions.
    pub partial_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 12,
            batch_size: 16,
            learning_rate: 0.02,
            momentum: 0.9,
            lr_decay: 0.1,
            neg_pos_ratio: 800.0 / 60.0,
            seed: 1,
            target_counts: (60, 800),
            jitter_scale: 1.0,
            jitter_shift: 0.0,
            partial_fraction: 1.0 / 3.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning rate {} must be >= 0", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} must be in [0, 1)", self.momentum));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay {} must be in (0, 1]", self.lr_decay));
        }
        if !(self.neg_pos_ratio.is_finite() && self.neg_pos_ratio >= 1.0) {
            return bad(format!("neg_pos_ratio {} must be >= 1", self.neg_pos_ratio));
        }
        if self.target_counts.0 == 0 || self.target_counts.1 == 0 {
            return bad("target counts must be at least 1".into());
        }
        if !(self.jitter_scale >= 1.0 && self.jitter_scale <= 2.0) {
            return bad(format!("jitter_scale {} must be in [1, 2]", self.jitter_scale));
        }
        if !(0.0..=0.5).contains(&self.jitter_shift) {
            return bad(format!("jitter_shift {} must be in [0, 0.5]", self.jitter_shift));
        }
        if !(0.0..=1.0).contains(&self.partial_fraction) {
            return bad(format!("partial_fraction {} must be in [0, 1]", self.partial_fraction));
        }
        Ok(())
    }

    fn jitters(&self) -> bool {
        self.jitter_scale > 1.0 || self.jitter_shift > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Plain,
    HardNegative,
    HardPositive,
    PartialOverlap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    /// Window-sized RGB patch.
    pub patch: Tensor3,
    /// 1 for face, 0 for background.
    pub label: u8,
    pub kind: SampleKind,
    pub image: String,
    /// Box in source-image pixels the patch represents.
    pub bbox: BBox,
}

impl TrainSample {
    pub fn is_face(&self) -> bool {
        self.label == 1
    }
}
