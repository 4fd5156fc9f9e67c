//! Demo logic, independent of the JavaScript bindings.

use fcn_cascade::nn::{arch, net_geometry, LayerKind, LayerSpec, NetGeometry, NetworkSpec};
use fcn_cascade::pyramid::{build_pyramid, PyramidConfig, Stream};
use fcn_cascade::score_map::{box_score, propose_from_streams, score_streams, IntegralImage, ProposalConfig, ScoreMap};
use fcn_cascade::trainer::{synth_dataset, SynthParams};
use fcn_cascade::{BBox, Tensor3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Knobs of the proposal panel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProposalKnobs {
    /// Amplitude of uniform noise added to every heatmap cell.
    pub noise: f64,
    pub threshold: f64,
    pub min_cell_score: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ProposalView {
    pub bbox: [f64; 4],
    pub omega: f64,
    pub score: f64,
    /// Best overlap with a planted face.
    pub best_iou: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct BoxView {
    pub omega: f64,
    pub best_iou: f64,
}

/// A synthetic scene together with the last computed score map.
pub struct SceneState {
    pub image: Tensor3,
    pub faces: Vec<BBox>,
    pub map: ScoreMap,
    table: IntegralImage,
    seed: u64,
}

impl SceneState {
    pub fn new(seed: u64) -> Self {
        let (mut annotated, _) = synth_dataset(seed, 1, &SynthParams::default());
        let first = annotated.remove(0);
        let map = ScoreMap::zeros(first.image.width(), first.image.height());
        let table = IntegralImage::new(&map);
        Self {
            image: first.image,
            faces: first.boxes,
            map,
            table,
            seed,
        }
    }

    /// Runs proposal selection with a stand-in for the stage-1 network: each
    /// heatmap cell scores the best overlap between its receptive field and
    /// a planted face, plus seeded noise.
    pub fn propose(&mut self, knobs: ProposalKnobs) -> Result<Vec<ProposalView>, String> {
        let geom = net_geometry(&arch::stage1());
        let levels = build_pyramid(&self.image, &PyramidConfig::default()).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed);
        let (w, h) = (self.image.width() as f64, self.image.height() as f64);
        let streams: Vec<Stream<'_>> = levels
            .iter()
            .filter(|l| l.tensor.width() >= geom.window && l.tensor.height() >= geom.window)
            .map(|level| {
                let (cols, rows) = (geom.cells_for(level.tensor.width()), geom.cells_for(level.tensor.height()));
                let (sx, sy) = (level.tensor.width() as f64 / w, level.tensor.height() as f64 / h);
                let heatmap = Tensor3::from_fn(cols, rows, 1, |col, row, _| {
                    let field = BBox::new(
                        geom.field_start(col) as f64 / sx,
                        geom.field_start(row) as f64 / sy,
                        geom.window as f64 / sx,
                        geom.window as f64 / sy,
                    );
                    let overlap = self.faces.iter().map(|f| f.iou(&field)).fold(0.0, f64::max);
                    (overlap + knobs.noise * rng.gen::<f64>()).min(1.0)
                });
                Stream { heatmap, level }
            })
            .collect();
        if streams.is_empty() {
            return Ok(Vec::new());
        }
        let (map, grids) = score_streams(&streams, geom).map_err(|e| e.to_string())?;
        let cfg = ProposalConfig {
            threshold: knobs.threshold,
            min_cell_score: knobs.min_cell_score,
            ..ProposalConfig::default()
        };
        cfg.validate().map_err(|e| e.to_string())?;
        let heatmaps: Vec<&Tensor3> = streams.iter().map(|s| &s.heatmap).collect();
        let proposals = propose_from_streams(&map, &grids, &heatmaps, &cfg).map_err(|e| e.to_string())?;
        self.table = IntegralImage::from_values(map.width, map.height, &map.normalized_values());
        self.map = map;
        Ok(proposals
            .iter()
            .map(|p| ProposalView {
                bbox: [p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h],
                omega: p.omega,
                score: p.score,
                best_iou: self.best_iou(&p.bbox),
            })
            .collect())
    }

    /// Box score of a dragged rectangle on the current map, snapped to pixels.
    pub fn inspect_box(&self, x: f64, y: f64, w: f64, h: f64) -> Result<BoxView, String> {
        let rect = BBox::new(x.min(x + w), y.min(y + h), w.abs(), h.abs()).pixel_rect(self.map.width, self.map.height);
        let snapped = BBox::from_pixel_rect(rect);
        let omega = box_score(&self.table, &snapped).map_err(|e| e.to_string())?;
        Ok(BoxView {
            omega,
            best_iou: self.best_iou(&snapped),
        })
    }

    fn best_iou(&self, b: &BBox) -> f64 {
        self.faces.iter().map(|f| f.iou(b)).fold(0.0, f64::max)
    }

    pub fn image_rgba(&self) -> Vec<u8> {
        let (w, h) = (self.image.width(), self.image.height());
        let mut out = Vec::with_capacity(w * h * 4);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    out.push(to_byte(self.image.get(x, y, c)));
                }
                out.push(255);
            }
        }
        out
    }

    /// Score map as a heat ramp, scaled by its maximum.
    pub fn map_rgba(&self) -> Vec<u8> {
        let peak = self.map.max();
        let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
        self.map
            .values
            .iter()
            .flat_map(|&v| {
                let t = v * scale;
                [to_byte(3.0 * t), to_byte(3.0 * t - 1.0), to_byte(3.0 * t - 2.0), 255]
            })
            .collect()
    }
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct FieldReport {
    pub stride: usize,
    pub window: usize,
    pub offset: i64,
    /// Heatmap columns and rows for the requested input, if any.
    pub heatmap: Option<(usize, usize)>,
    pub layers: usize,
}

/// Parses one layer per line or `;`-separated item:
/// `conv K [sS] [pP]`, `pool K [sS] [pP]`, `relu`, `head K`.
pub fn parse_layers(text: &str) -> Result<NetworkSpec, String> {
    let mut layers = Vec::new();
    for (n, item) in text.split([';', '\n']).map(str::trim).filter(|s| !s.is_empty()).enumerate() {
        let mut words = item.split_whitespace();
        let kind = words.next().unwrap_or_default().to_ascii_lowercase();
        let (mut kernel, mut stride, mut padding) = (None, 1, 0);
        for word in words {
            let bad = || format!("layer {}: cannot read `{word}`", n + 1);
            if let Some(v) = word.strip_prefix('s') {
                stride = v.parse().map_err(|_| bad())?;
            } else if let Some(v) = word.strip_prefix('p') {
                padding = v.parse().map_err(|_| bad())?;
            } else {
                kernel = Some(word.parse::<usize>().map_err(|_| bad())?);
            }
        }
        let need_kernel = || kernel.ok_or_else(|| format!("layer {}: `{kind}` needs a kernel size", n + 1));
        layers.push(match kind.as_str() {
            "conv" => LayerSpec::conv(1, 1, need_kernel()?, stride, padding),
            "pool" => LayerSpec::max_pool(1, need_kernel()?, stride).with_padding(padding),
            "relu" => LayerSpec::relu(1),
            "head" => LayerSpec::head(1, need_kernel()?),
            other => return Err(format!("layer {}: unknown kind `{other}`", n + 1)),
        });
    }
    NetworkSpec::new("custom", layers).map_err(|e| e.to_string())
}

pub fn receptive_field(text: &str, width: usize, height: usize) -> Result<FieldReport, String> {
    let net = parse_layers(text)?;
    let NetGeometry { stride, window, offset } = net_geometry(&net);
    Ok(FieldReport {
        stride,
        window,
        offset,
        heatmap: net.heatmap_dims(width, height).ok(),
        layers: net.layers.len(),
    })
}

/// A built-in stage network in the calculator's syntax.
pub fn preset_layers(stage: usize) -> Option<String> {
    let net = arch::for_stage(stage)?;
    let lines: Vec<String> = net
        .layers
        .iter()
        .map(|l| {
            let extras = |l: &LayerSpec| {
                let mut s = String::new();
                if l.stride != 1 {
                    s += &format!(" s{}", l.stride);
                }
                if l.padding != 0 {
                    s += &format!(" p{}", l.padding);
                }
                s
            };
            match l.kind {
                LayerKind::Conv => format!("conv {}{}", l.kernel, extras(l)),
                LayerKind::MaxPool => format!("pool {}{}", l.kernel, extras(l)),
                LayerKind::Relu => "relu".to_string(),
                LayerKind::FullyConvHead => format!("head {}", l.kernel),
            }
        })
        .collect();
    Some(lines.join("\n"))
}
