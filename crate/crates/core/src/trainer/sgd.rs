use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainSample};
use crate::error::{Error, Result};
use crate::nn::{net_backward, net_forward, CrossEntropy, Gradients, NetworkSpec};
use crate::tensor::Tensor3;

/// Mean cross-entropy treated as a blown-up run.
const DIVERGED_LOSS: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
}

fn check_samples(net: &NetworkSpec, samples: &[TrainSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Sampling("no training samples".into()));
    }
    if !samples.iter().any(|s| s.is_face()) || samples.iter().all(|s| s.is_face()) {
        return Err(Error::Sampling("training needs both face and background samples".into()));
    }
    for s in samples {
        if net.heatmap_dims(s.patch.width(), s.patch.height())? != (1, 1) {
            return Err(Error::Sampling(format!(
                "{}x{} patch does not give a single heatmap cell",
                s.patch.width(),
                s.patch.height()
            )));
        }
    }
    Ok(())
}

/// Minibatch SGD with momentum on mean cross-entropy. The batch order is a
/// seeded shuffle per epoch and gradients are summed in batch order, so
/// equal inputs give bit-identical weights.
pub fn train(net: &NetworkSpec, samples: &[TrainSample], cfg: &TrainConfig) -> Result<(NetworkSpec, Vec<EpochLog>)> {
    cfg.validate()?;
    check_samples(net, samples)?;
    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity = Gradients::zeros_like(&net);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let targets = [Tensor3::filled(1, 1, 1, 0.0), Tensor3::filled(1, 1, 1, 1.0)];
    let decay_epoch = (2 * cfg.epochs).div_ceil(3);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = if epoch >= decay_epoch && cfg.epochs > 1 {
            cfg.learning_rate * cfg.lr_decay
        } else {
            cfg.learning_rate
        };
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros_like(&net);
            for &i in batch {
                let s = &samples[i];
                let b = net_backward(&net, &s.patch, &targets[s.label as usize], CrossEntropy::default())?;
                loss_sum += b.loss;
                correct += usize::from((b.heatmap.get(0, 0, 0) >= 0.5) == s.is_face());
                grads.add_assign(&b.grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            for ((layer, v), g) in net.layers.iter_mut().zip(&mut velocity.layers).zip(&grads.layers) {
                for ((w, vw), gw) in layer.weights.iter_mut().zip(&mut v.weights).zip(&g.weights) {
                    *vw = cfg.momentum * *vw - lr * gw;
                    *w += *vw;
                }
                for ((b, vb), gb) in layer.biases.iter_mut().zip(&mut v.biases).zip(&g.biases) {
                    *vb = cfg.momentum * *vb - lr * gb;
                    *b += *vb;
                }
            }
        }
        let loss = loss_sum / samples.len() as f64;
        let finite = net
            .layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()));
        if !(loss < DIVERGED_LOSS) || !finite {
            return Err(Error::Divergence { epoch });
        }
        let entry = EpochLog {
            epoch,
            loss,
            train_acc: correct as f64 / samples.len() as f64,
        };
        info!("{} epoch {epoch}: loss {loss:.5} acc {:.4}", net.name, entry.train_acc);
        log.push(entry);
    }
    Ok((net, log))
}

/// Fraction of samples classified correctly at a 0.5 cut.
pub fn accuracy(net: &NetworkSpec, samples: &[TrainSample]) -> Result<f64> {
    let mut correct = 0usize;
    for s in samples {
        let p = net_forward(net, &s.patch)?.get(0, 0, 0);
        correct += usize::from((p >= 0.5) == s.is_face());
    }
    Ok(correct as f64 / samples.len().max(1) as f64)
}
