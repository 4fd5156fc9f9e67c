use super::gemm::gemm_nn;
use super::layer::{LayerKind, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// Upper bound on the im2col scratch buffer, in elements.
const COL_BUDGET: usize = 1 << 18;

/// Sentinel in max-pool argmax tables for a maximum taken from zero padding.
pub(crate) const PADDING_ARGMAX: u32 = u32::MAX;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub(crate) fn output_dims(input: &Tensor3, layer: &LayerSpec, index: usize) -> Result<(usize, usize)> {
    match (layer.output_len(input.width()), layer.output_len(input.height())) {
        (Some(w), Some(h)) => Ok((w, h)),
        _ => Err(Error::InputTooSmall {
            layer: index,
            width: input.width(),
            height: input.height(),
        }),
    }
}

fn check_channels(input: &Tensor3, layer: &LayerSpec, index: usize) -> Result<()> {
    if input.depth() != layer.in_channels {
        return Err(Error::ChannelMismatch {
            layer: index,
            expected: layer.in_channels,
            found: input.depth(),
        });
    }
    Ok(())
}

/// Unfolds output rows `oy0..oy0 + rows` into `col`, one `k*k*cin` row per
/// output cell in `(ky, kx, channel)` order. Padding reads as zero.
pub(crate) fn im2col(input: &Tensor3, layer: &LayerSpec, oy0: usize, rows: usize, ow: usize, col: &mut [f64]) {
    let (k, s, p) = (layer.kernel, layer.stride, layer.padding as isize);
    let cin = input.depth();
    let (iw, ih) = (input.width() as isize, input.height() as isize);
    let kk = k * k * cin;
    let data = input.data();
    for r in 0..rows {
        let oy = oy0 + r;
        for ox in 0..ow {
            let dst = &mut col[(r * ow + ox) * kk..(r * ow + ox + 1) * kk];
            let x0 = (ox * s) as isize - p;
            for ky in 0..k {
                let iy = (oy * s + ky) as isize - p;
                let row = &mut dst[ky * k * cin..(ky + 1) * k * cin];
                if iy < 0 || iy >= ih {
                    row.fill(0.0);
                    continue;
                }
                let base = (iy * iw) as usize;
                if x0 >= 0 && x0 + k as isize <= iw {
                    let start = (base + x0 as usize) * cin;
                    row.copy_from_slice(&data[start..start + k * cin]);
                } else {
                    for kx in 0..k {
                        let ix = x0 + kx as isize;
                        let cell = &mut row[kx * cin..(kx + 1) * cin];
                        if ix < 0 || ix >= iw {
                            cell.fill(0.0);
                        } else {
                            let start = (base + ix as usize) * cin;
                            cell.copy_from_slice(&data[start..start + cin]);
                        }
                    }
                }
            }
        }
    }
}

/// Number of output rows per im2col band.
pub(crate) fn band_rows(ow: usize, kk: usize, oh: usize) -> usize {
    (COL_BUDGET / (ow * kk).max(1)).clamp(1, oh.max(1))
}

pub(crate) fn conv_at(input: &Tensor3, layer: &LayerSpec, index: usize) -> Result<Tensor3> {
    if !layer.kind.is_parametric() {
        return Err(Error::InvalidLayer {
            layer: index,
            reason: format!("{:?} is not a convolution", layer.kind),
        });
    }
    check_channels(input, layer, index)?;
    let (ow, oh) = output_dims(input, layer, index)?;
    let cout = layer.out_channels;
    let kk = layer.kernel * layer.kernel * layer.in_channels;

    let mut out = Vec::with_capacity(ow * oh * cout);
    for _ in 0..ow * oh {
        out.extend_from_slice(&layer.biases);
    }
    let band = band_rows(ow, kk, oh);
    let mut col = vec![0.0; band * ow * kk];
    let mut oy0 = 0;
    while oy0 < oh {
        let rows = band.min(oh - oy0);
        let m = rows * ow;
        im2col(input, layer, oy0, rows, ow, &mut col[..m * kk]);
        gemm_nn(
            m,
            kk,
            cout,
            &col[..m * kk],
            &layer.weights,
            1.0,
            &mut out[oy0 * ow * cout..(oy0 + rows) * ow * cout],
        );
        oy0 += rows;
    }
    Tensor3::from_vec(ow, oh, cout, out)
}

/// Convolution (also used for the fully convolutional head): each output
/// cell is the affine map of its `k x k x in_channels` window.
pub fn conv_forward(input: &Tensor3, layer: &LayerSpec) -> Result<Tensor3> {
    conv_at(input, layer, 0)
}

pub(crate) fn maxpool_at(
    input: &Tensor3,
    layer: &LayerSpec,
    index: usize,
    argmax: Option<&mut Vec<u32>>,
) -> Result<Tensor3> {
    if layer.kind != LayerKind::MaxPool {
        return Err(Error::InvalidLayer {
            layer: index,
            reason: format!("{:?} is not a max pool", layer.kind),
        });
    }
    check_channels(input, layer, index)?;
    let (ow, oh) = output_dims(input, layer, index)?;
    let (k, s, p) = (layer.kernel, layer.stride, layer.padding as isize);
    let c = input.depth();
    let (iw, ih) = (input.width() as isize, input.height() as isize);
    let data = input.data();

    let mut out = vec![f64::NEG_INFINITY; ow * oh * c];
    let mut arg = vec![PADDING_ARGMAX; if argmax.is_some() { ow * oh * c } else { 0 }];
    let track = argmax.is_some();
    for oy in 0..oh {
        for ox in 0..ow {
            let o = (oy * ow + ox) * c;
            let mut touches_padding = false;
            for ky in 0..k {
                let iy = (oy * s + ky) as isize - p;
                for kx in 0..k {
                    let ix = (ox * s + kx) as isize - p;
                    if iy < 0 || iy >= ih || ix < 0 || ix >= iw {
                        touches_padding = true;
                        continue;
                    }
                    let i = ((iy * iw + ix) as usize) * c;
                    for ch in 0..c {
                        let v = data[i + ch];
                        if v > out[o + ch] {
                            out[o + ch] = v;
                            if track {
                                arg[o + ch] = (i + ch) as u32;
                            }
                        }
                    }
                }
            }
            if touches_padding {
                for ch in 0..c {
                    // zero padding takes part in the max
                    if out[o + ch] < 0.0 {
                        out[o + ch] = 0.0;
                        if track {
                            arg[o + ch] = PADDING_ARGMAX;
                        }
                    }
                }
            }
        }
    }
    if let Some(dst) = argmax {
        *dst = arg;
    }
    Tensor3::from_vec(ow, oh, c, out)
}

/// Per-channel window maximum.
pub fn maxpool_forward(input: &Tensor3, layer: &LayerSpec) -> Result<Tensor3> {
    maxpool_at(input, layer, 0, None)
}

pub fn relu_forward(input: &Tensor3) -> Tensor3 {
    input.map(|v| v.max(0.0))
}

pub(crate) fn layer_forward(
    input: &Tensor3,
    layer: &LayerSpec,
    index: usize,
    argmax: Option<&mut Vec<u32>>,
) -> Result<Tensor3> {
    match layer.kind {
        LayerKind::Conv | LayerKind::FullyConvHead => conv_at(input, layer, index),
        LayerKind::MaxPool => maxpool_at(input, layer, index, argmax),
        LayerKind::Relu => {
            check_channels(input, layer, index)?;
            Ok(relu_forward(input))
        }
    }
}

/// Raw head outputs before the logistic squashing.
pub fn net_logits(net: &NetworkSpec, input: &Tensor3) -> Result<Tensor3> {
    net.heatmap_dims(input.width(), input.height())?;
    let mut layers = net.layers.iter().enumerate();
    let (i0, first) = layers.next().ok_or_else(|| Error::InvalidNetwork("no layers".into()))?;
    let mut x = layer_forward(input, first, i0, None)?;
    for (i, layer) in layers {
        x = layer_forward(&x, layer, i, None)?;
    }
    Ok(x)
}

/// Runs the network and squashes the head with a logistic function, giving
/// a depth-1 heatmap with values in `[0, 1]`.
pub fn net_forward(net: &NetworkSpec, input: &Tensor3) -> Result<Tensor3> {
    Ok(net_logits(net, input)?.map(sigmoid))
}
