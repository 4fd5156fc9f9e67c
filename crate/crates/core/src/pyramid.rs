//! Image pyramid and per-scale heatmap streams.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{net_forward, net_geometry, NetworkSpec};
use crate::tensor::Tensor3;

/// Long-edge lengths of the pyramid levels, largest first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PyramidConfig {
    pub target_long_edges: Vec<usize>,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self {
            target_long_edges: vec![600, 400, 260, 170, 100, 60],
        }
    }
}

impl PyramidConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_long_edges.is_empty() {
            return Err(Error::Config("pyramid needs at least one level".into()));
        }
        if self.target_long_edges.contains(&0) {
            return Err(Error::Config("pyramid levels must be positive".into()));
        }
        if self.target_long_edges.windows(2).any(|p| p[0] <= p[1]) {
            return Err(Error::Config("pyramid levels must be strictly decreasing".into()));
        }
        Ok(())
    }
}

/// One pyramid level.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledImage {
    pub tensor: Tensor3,
    /// Target long edge over the original long edge.
    pub scale_factor: f64,
    pub original_size: (usize, usize),
}

impl ScaledImage {
    /// Per-axis ratio of level pixels to original pixels. Differs from
    /// `scale_factor` on the short axis by the rounding of its length.
    pub fn axis_scales(&self) -> (f64, f64) {
        (
            self.tensor.width() as f64 / self.original_size.0 as f64,
            self.tensor.height() as f64 / self.original_size.1 as f64,
        )
    }
}

/// Bilinear resize with pixel-center alignment. Same-size requests return a copy.
pub fn resize_bilinear(image: &Tensor3, width: usize, height: usize) -> Tensor3 {
    let (w, h) = (image.width() as f64, image.height() as f64);
    resize_region(image, 0.0, 0.0, w, h, width, height)
}

/// Resamples the region `[x0, x0 + rw) x [y0, y0 + rh)` of `image` onto a
/// `width x height` grid. Samples outside the image repeat the border.
pub fn resize_region(
    image: &Tensor3,
    x0: f64,
    y0: f64,
    rw: f64,
    rh: f64,
    width: usize,
    height: usize,
) -> Tensor3 {
    let depth = image.depth();
    let exact = x0 == 0.0
        && y0 == 0.0
        && rw == width as f64
        && rh == height as f64
        && width == image.width()
        && height == image.height();
    if exact {
        return image.clone();
    }
    let taps = |out_len: usize, start: f64, span: f64, in_len: usize| -> Vec<(usize, usize, f64)> {
        let step = span / out_len as f64;
        let last = (in_len - 1) as f64;
        (0..out_len)
            .map(|u| {
                let src = (start + (u as f64 + 0.5) * step - 0.5).clamp(0.0, last);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(in_len - 1);
                (i0, i1, src - i0 as f64)
            })
            .collect()
    };
    let xs = taps(width, x0, rw, image.width());
    let ys = taps(height, y0, rh, image.height());
    let mut out = Tensor3::zeros(width, height, depth);
    let src = image.data();
    let row_len = image.width() * depth;
    let dst = out.data_mut();
    for (v, &(y0i, y1i, fy)) in ys.iter().enumerate() {
        let top = &src[y0i * row_len..(y0i + 1) * row_len];
        let bot = &src[y1i * row_len..(y1i + 1) * row_len];
        let out_row = &mut dst[v * width * depth..(v + 1) * width * depth];
        for (u, &(x0i, x1i, fx)) in xs.iter().enumerate() {
            for c in 0..depth {
                let lerp = |a: f64, b: f64, f: f64| a + (b - a) * f;
                let t = lerp(top[x0i * depth + c], top[x1i * depth + c], fx);
                let b = lerp(bot[x0i * depth + c], bot[x1i * depth + c], fx);
                out_row[u * depth + c] = lerp(t, b, fy);
            }
        }
    }
    out
}

/// Level size for a target long edge: the long side becomes `target`, the
/// short side is scaled and rounded, at least one pixel.
pub fn level_dims(width: usize, height: usize, target: usize) -> (usize, usize) {
    let long = width.max(height) as f64;
    let scale = target as f64 / long;
    let short = |len: usize| ((len as f64 * scale).round() as usize).max(1);
    if width >= height {
        (target, short(height))
    } else {
        (short(width), target)
    }
}

/// Builds one level per configured target. Targets more than twice the
/// image's long edge are skipped.
pub fn build_pyramid(image: &Tensor3, cfg: &PyramidConfig) -> Result<Vec<ScaledImage>> {
    cfg.validate()?;
    if image.depth() != 3 {
        return Err(Error::InvalidImage(format!("expected 3 channels, found {}", image.depth())));
    }
    if image.width() < 8 || image.height() < 8 {
        return Err(Error::InvalidImage(format!(
            "image {}x{} is smaller than 8 pixels on an edge",
            image.width(),
            image.height()
        )));
    }
    let long = image.width().max(image.height());
    let levels = cfg
        .target_long_edges
        .iter()
        .filter(|&&t| t <= 2 * long)
        .map(|&target| {
            let (w, h) = level_dims(image.width(), image.height(), target);
            ScaledImage {
                tensor: resize_bilinear(image, w, h),
                scale_factor: target as f64 / long as f64,
                original_size: (image.width(), image.height()),
            }
        })
        .collect();
    Ok(levels)
}

/// Heatmap of one pyramid level.
#[derive(Clone, Debug)]
pub struct Stream<'a> {
    pub heatmap: Tensor3,
    pub level: &'a ScaledImage,
}

/// Runs the network on every level large enough to hold one receptive
/// window. Output order follows the pyramid order.
pub fn run_streams<'a>(net: &NetworkSpec, pyramid: &'a [ScaledImage]) -> Result<Vec<Stream<'a>>> {
    let window = net_geometry(net).window;
    let usable: Vec<&ScaledImage> = pyramid
        .iter()
        .filter(|level| {
            let fits = net.heatmap_dims(level.tensor.width(), level.tensor.height()).is_ok()
                && level.tensor.width() >= window
                && level.tensor.height() >= window;
            if !fits {
                debug!(
                    "skipping {}x{} pyramid level: smaller than the {window}px window",
                    level.tensor.width(),
                    level.tensor.height()
                );
            }
            fits
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptyPyramid);
    }
    let run = |level: &&'a ScaledImage| -> Result<Stream<'a>> {
        Ok(Stream {
            heatmap: net_forward(net, &level.tensor)?,
            level,
        })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        usable.par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        usable.iter().map(run).collect()
    }
}
