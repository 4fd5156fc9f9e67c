use serde::{Deserialize, Serialize};

use super::forward::{band_rows, im2col, layer_forward, sigmoid, PADDING_ARGMAX};
use super::gemm::{gemm_nt, gemm_tn};
use super::layer::{LayerKind, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// Mean binary cross-entropy over heatmap cells, multiplied by `scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossEntropy {
    pub scale: f64,
}

impl Default for CrossEntropy {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

impl CrossEntropy {
    /// Loss for one logit `z` against target `y`, computed stably.
    #[inline]
    pub fn cell_loss(z: f64, y: f64) -> f64 {
        z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
    }

    pub fn loss(&self, logits: &Tensor3, targets: &Tensor3) -> f64 {
        let n = logits.data().len() as f64;
        let total: f64 = logits
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&z, &y)| Self::cell_loss(z, y))
            .sum();
        self.scale * total / n
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Gradients for every layer of a network; parameter-free layers hold empty vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &NetworkSpec) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.biases.iter_mut().zip(&b.biases).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.weights.iter_mut().chain(g.biases.iter_mut()).for_each(|v| *v *= factor);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(&g.biases).copied())
    }
}

/// Result of one forward/backward pass.
#[derive(Clone, Debug)]
pub struct Backward {
    pub loss: f64,
    /// Squashed heatmap of the forward pass.
    pub heatmap: Tensor3,
    pub grads: Gradients,
}

fn conv_backward(
    input: &Tensor3,
    layer: &LayerSpec,
    d_out: &Tensor3,
    grad: &mut LayerGrad,
    want_input_grad: bool,
) -> Option<Tensor3> {
    let (ow, oh, cout) = (d_out.width(), d_out.height(), d_out.depth());
    let k = layer.kernel;
    let cin = layer.in_channels;
    let kk = k * k * cin;
    let dout = d_out.data();

    for cell in dout.chunks_exact(cout) {
        grad.biases.iter_mut().zip(cell).for_each(|(b, d)| *b += d);
    }

    let mut d_in = want_input_grad.then(|| vec![0.0; input.data().len()]);
    let band = band_rows(ow, kk, oh);
    let mut col = vec![0.0; band * ow * kk];
    let mut d_col = if want_input_grad { vec![0.0; band * ow * kk] } else { Vec::new() };
    let (s, p) = (layer.stride, layer.padding as isize);
    let (iw, ih) = (input.width() as isize, input.height() as isize);

    let mut oy0 = 0;
    while oy0 < oh {
        let rows = band.min(oh - oy0);
        let m = rows * ow;
        let d_band = &dout[oy0 * ow * cout..(oy0 + rows) * ow * cout];
        im2col(input, layer, oy0, rows, ow, &mut col[..m * kk]);
        // dW (kk x cout) += col^T (kk x m) * dOut (m x cout)
        gemm_tn(kk, m, cout, &col[..m * kk], d_band, 1.0, &mut grad.weights);

        if let Some(d_in) = d_in.as_mut() {
            // dCol (m x kk) = dOut (m x cout) * W^T, W stored kk x cout
            gemm_nt(m, cout, kk, d_band, &layer.weights, 0.0, &mut d_col[..m * kk]);
            for r in 0..rows {
                let oy = oy0 + r;
                for ox in 0..ow {
                    let src = &d_col[(r * ow + ox) * kk..(r * ow + ox + 1) * kk];
                    for ky in 0..k {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= ih {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * s + kx) as isize - p;
                            if ix < 0 || ix >= iw {
                                continue;
                            }
                            let dst = ((iy * iw + ix) as usize) * cin;
                            let from = (ky * k + kx) * cin;
                            for c in 0..cin {
                                d_in[dst + c] += src[from + c];
                            }
                        }
                    }
                }
            }
        }
        oy0 += rows;
    }
    d_in.map(|d| Tensor3::from_vec(input.width(), input.height(), cin, d).expect("input-shaped gradient"))
}

/// Exact gradients of the scaled mean cross-entropy between the squashed
/// heatmap and `targets` (depth 1, heatmap-sized, values in `[0, 1]`).
pub fn net_backward(net: &NetworkSpec, input: &Tensor3, targets: &Tensor3, loss: CrossEntropy) -> Result<Backward> {
    net.heatmap_dims(input.width(), input.height())?;
    let n_layers = net.layers.len();
    let mut outputs: Vec<Tensor3> = Vec::with_capacity(n_layers);
    let mut argmax: Vec<Vec<u32>> = vec![Vec::new(); n_layers];
    for (i, layer) in net.layers.iter().enumerate() {
        let x = if i == 0 { input } else { &outputs[i - 1] };
        let arg = (layer.kind == LayerKind::MaxPool).then_some(&mut argmax[i]);
        let y = layer_forward(x, layer, i, arg)?;
        outputs.push(y);
    }
    let logits = outputs.last().expect("validated network has layers");
    if logits.width() != targets.width() || logits.height() != targets.height() || targets.depth() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "heatmap is {}x{}, targets are {}x{}x{}",
            logits.width(),
            logits.height(),
            targets.width(),
            targets.height(),
            targets.depth()
        )));
    }

    let n = logits.data().len() as f64;
    let loss_value = loss.loss(logits, targets);
    let heatmap = logits.map(sigmoid);
    let mut grad = Tensor3::from_vec(
        logits.width(),
        logits.height(),
        1,
        heatmap
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&p, &y)| loss.scale * (p - y) / n)
            .collect(),
    )?;

    let mut grads = Gradients::zeros_like(net);
    for i in (0..n_layers).rev() {
        let layer = &net.layers[i];
        let x = if i == 0 { input } else { &outputs[i - 1] };
        let need_input = i > 0;
        grad = match layer.kind {
            LayerKind::Conv | LayerKind::FullyConvHead => {
                match conv_backward(x, layer, &grad, &mut grads.layers[i], need_input) {
                    Some(g) => g,
                    None => break,
                }
            }
            LayerKind::MaxPool => {
                let mut d = vec![0.0; x.data().len()];
                for (&a, &g) in argmax[i].iter().zip(grad.data()) {
                    if a != PADDING_ARGMAX {
                        d[a as usize] += g;
                    }
                }
                Tensor3::from_vec(x.width(), x.height(), x.depth(), d)?
            }
            LayerKind::Relu => {
                let d = grad
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                    .collect();
                Tensor3::from_vec(x.width(), x.height(), x.depth(), d)?
            }
        };
    }

    Ok(Backward {
        loss: loss_value,
        heatmap,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_point_is_stationary() {
        let net = NetworkSpec::new("zero", vec![LayerSpec::head(3, 3)]).unwrap();
        let input = Tensor3::from_fn(6, 3, 3, |x, y, c| (x + 2 * y + c) as f64 * 0.1);
        // 4x1 heatmap, half the cells labelled face
        let targets = Tensor3::from_vec(4, 1, 1, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = net_backward(&net, &input, &targets, CrossEntropy::default()).unwrap();
        assert!(b.grads.layers[0].biases[0].abs() < 1e-15);
        assert!((b.loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn mismatched_targets_are_rejected() {
        let net = NetworkSpec::new("n", vec![LayerSpec::head(1, 2)]).unwrap();
        let err = net_backward(
            &net,
            &Tensor3::zeros(4, 4, 1),
            &Tensor3::zeros(2, 2, 1),
            CrossEntropy::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn stable_cell_loss() {
        assert!(CrossEntropy::cell_loss(800.0, 1.0).abs() < 1e-12);
        assert!((CrossEntropy::cell_loss(-800.0, 1.0) - 800.0).abs() < 1e-9);
        assert!((CrossEntropy::cell_loss(0.0, 0.3) - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
