//! Three-stage detection: score-map proposals, then two verification nets
//! that rescan each proposal's neighbourhood at a few zoom levels to reject
//! it or tighten it.

mod model;

pub use model::{load_model, load_stages, save_model, save_stage, ModelManifest, StageEntry, MANIFEST_FILE};

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::nn::{net_forward, net_geometry, NetworkSpec};
use crate::pyramid::{build_pyramid, resize_region, run_streams, PyramidConfig};
use crate::score_map::{
    fuse_streams, project_heatmap, propose_from_streams, score_streams, suppress, IntegralImage, Proposal,
    ProposalConfig, ScoreMap, StageBox, StreamGrid,
};
use crate::tensor::Tensor3;

/// Side multiplier of the context margin around a box handed to a
/// verification net; nets are trained on crops padded the same way.
pub const CONTEXT_PAD: f64 = 1.25;

/// How a verification stage turns its local score map into a box.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    /// Window with the highest box score on the fused local map.
    Omega,
    /// Window of the single highest-scoring heatmap cell.
    #[default]
    PeakCell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Short edge of the resized region, in multiples of the net window.
    pub zooms: Vec<f64>,
    pub refine: RefineMode,
    /// Suppression applied to each stage's survivors.
    pub dedup_iou: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            zooms: vec![1.0, 1.19, 1.41, 1.68, 2.0],
            refine: RefineMode::PeakCell,
            dedup_iou: 0.3,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.zooms.is_empty() || self.zooms.iter().any(|z| !(z.is_finite() && *z >= 1.0)) {
            return Err(Error::Config("verification zooms must be non-empty and >= 1".into()));
        }
        if !(self.dedup_iou > 0.0 && self.dedup_iou <= 1.0) {
            return Err(Error::Config(format!("dedup IoU {} must be in (0, 1]", self.dedup_iou)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageThresholds {
    pub stage2: f64,
    pub stage3: f64,
}

impl Default for StageThresholds {
    fn default() -> Self {
        Self { stage2: 0.5, stage3: 0.7 }
    }
}

/// Everything `detect` needs.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeModel {
    pub stage1: NetworkSpec,
    pub stage2: NetworkSpec,
    pub stage3: NetworkSpec,
    pub thresholds: StageThresholds,
    pub proposal: ProposalConfig,
    pub pyramid: PyramidConfig,
    pub verify: VerifyConfig,
}

impl CascadeModel {
    pub fn validate(&self) -> Result<()> {
        for (i, net) in [&self.stage1, &self.stage2, &self.stage3].into_iter().enumerate() {
            net.validate()?;
            if net.input_channels() != 3 {
                return Err(Error::InvalidNetwork(format!("stage {} must take 3 input channels", i + 1)));
            }
        }
        for (name, t) in [("stage2", self.thresholds.stage2), ("stage3", self.thresholds.stage3)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("{name} threshold {t} outside [0, 1]")));
            }
        }
        self.proposal.validate()?;
        self.pyramid.validate()?;
        self.verify.validate()
    }

    pub fn stage(&self, n: usize) -> Option<&NetworkSpec> {
        match n {
            1 => Some(&self.stage1),
            2 => Some(&self.stage2),
            3 => Some(&self.stage3),
            _ => None,
        }
    }
}

/// Final output box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    /// Heatmap peak of the last verification stage.
    pub confidence: f64,
    pub trace: Vec<StageBox>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CascadeOutput {
    pub detections: Vec<Detection>,
    /// Proposals leaving stage 1, survivors of stage 2 and of stage 3.
    pub stage_counts: [usize; 3],
}

/// Stage-1 score map and proposals. An image smaller than one receptive
/// window everywhere yields an empty map and no proposals.
pub fn stage1_proposals(
    image: &Tensor3,
    net: &NetworkSpec,
    pyramid: &PyramidConfig,
    cfg: &ProposalConfig,
) -> Result<(ScoreMap, Vec<Proposal>)> {
    let levels = build_pyramid(image, pyramid)?;
    let streams = match run_streams(net, &levels) {
        Ok(s) => s,
        Err(Error::EmptyPyramid) => return Ok((ScoreMap::zeros(image.width(), image.height()), Vec::new())),
        Err(e) => return Err(e),
    };
    let (map, grids) = score_streams(&streams, net_geometry(net))?;
    let heatmaps: Vec<&Tensor3> = streams.iter().map(|s| &s.heatmap).collect();
    let proposals = propose_from_streams(&map, &grids, &heatmaps, cfg)?;
    Ok((map, proposals))
}

/// Ranks by score, then box, and drops boxes overlapping a better one.
pub fn dedup(mut proposals: Vec<Proposal>, iou: f64) -> Vec<Proposal> {
    proposals.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.bbox.tie_order(&b.bbox)));
    suppress(proposals, |p| p.bbox, iou, usize::MAX)
}

/// Runs the whole cascade.
pub fn detect(image: &Tensor3, model: &CascadeModel) -> Result<CascadeOutput> {
    Ok(run_cascade(image, model)?.output)
}

/// Cascade output together with the stage-1 score map and proposals.
#[derive(Clone, Debug)]
pub struct CascadeRun {
    pub score_map: ScoreMap,
    pub proposals: Vec<Proposal>,
    pub output: CascadeOutput,
}

pub fn run_cascade(image: &Tensor3, model: &CascadeModel) -> Result<CascadeRun> {
    let (score_map, p1) = stage1_proposals(image, &model.stage1, &model.pyramid, &model.proposal)?;
    let p2 = dedup(
        verify_stage(&p1, &model.stage2, image, model.thresholds.stage2, &model.verify)?,
        model.verify.dedup_iou,
    );
    let p3 = dedup(
        verify_stage(&p2, &model.stage3, image, model.thresholds.stage3, &model.verify)?,
        model.verify.dedup_iou,
    );
    let stage_counts = [p1.len(), p2.len(), p3.len()];
    let mut detections: Vec<Detection> = p3
        .into_iter()
        .map(|p| Detection {
            bbox: p.bbox,
            confidence: p.score,
            trace: p.trace,
        })
        .collect();
    detections.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(a.bbox.tie_order(&b.bbox)));
    Ok(CascadeRun {
        score_map,
        proposals: p1,
        output: CascadeOutput {
            detections,
            stage_counts,
        },
    })
}

/// Integer region a verification stage examines for `p`: the padded box
/// intersected with the proposal's bound and the image, rounded inward.
pub fn verification_region(p: &Proposal, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
    let padded = p.bbox.scaled(CONTEXT_PAD);
    let region = padded.intersection(&p.bound)?.clamp_to(width, height);
    let x0 = region.x.ceil() as usize;
    let y0 = region.y.ceil() as usize;
    let x1 = (region.right().floor() as usize).min(width);
    let y1 = (region.bottom().floor() as usize).min(height);
    (x1 > x0 && y1 > y0).then_some((x0, y0, x1, y1))
}

/// Local evidence gathered over all zooms of one region.
struct RegionScan {
    map: ScoreMap,
    grids: Vec<StreamGrid>,
    /// Best cell: (score, zoom index, column, row).
    peak: (f64, usize, usize, usize),
}

fn scan_region(
    image: &Tensor3,
    net: &NetworkSpec,
    (x0, y0, x1, y1): (usize, usize, usize, usize),
    zooms: &[f64],
) -> Result<RegionScan> {
    let geom = net_geometry(net);
    let (rw, rh) = (x1 - x0, y1 - y0);
    let short = rw.min(rh) as f64;
    let mut maps = Vec::with_capacity(zooms.len());
    let mut grids = Vec::with_capacity(zooms.len());
    let mut peak = (f64::NEG_INFINITY, 0, 0, 0);
    for (zi, &zoom) in zooms.iter().enumerate() {
        let scale = geom.window as f64 * zoom / short;
        let lw = ((rw as f64 * scale).round() as usize).max(geom.window);
        let lh = ((rh as f64 * scale).round() as usize).max(geom.window);
        let level = resize_region(image, x0 as f64, y0 as f64, rw as f64, rh as f64, lw, lh);
        let heat = net_forward(net, &level)?;
        for row in 0..heat.height() {
            for col in 0..heat.width() {
                let s = heat.get(col, row, 0);
                if s > peak.0 {
                    peak = (s, zi, col, row);
                }
            }
        }
        let grid = StreamGrid {
            geom,
            level_size: (lw, lh),
            original_size: (rw, rh),
            cells: (heat.width(), heat.height()),
        };
        maps.push(project_heatmap(&heat, &grid)?);
        grids.push(grid);
    }
    Ok(RegionScan {
        map: fuse_streams(&maps)?,
        grids,
        peak,
    })
}

/// Face hypothesis of a cell: its field with the context margin removed.
fn cell_face(grid: &StreamGrid, col: usize, row: usize) -> BBox {
    grid.field_box(col, row).scaled(1.0 / CONTEXT_PAD)
}

fn refine(scan: &RegionScan, mode: RefineMode) -> (BBox, f64) {
    let (rw, rh) = (scan.map.width, scan.map.height);
    match mode {
        RefineMode::PeakCell => {
            let (_, zi, col, row) = scan.peak;
            let rect = cell_face(&scan.grids[zi], col, row).pixel_rect(rw, rh);
            (BBox::from_pixel_rect(rect), 0.0)
        }
        RefineMode::Omega => {
            let table = IntegralImage::from_values(rw, rh, &scan.map.normalized_values());
            let mut best: Option<(f64, BBox)> = None;
            for grid in &scan.grids {
                for row in 0..grid.cells.1 {
                    for col in 0..grid.cells.0 {
                        let (x0, y0, x1, y1) = cell_face(grid, col, row).pixel_rect(rw, rh);
                        let mass = table.sum(x0, y0, x1, y1);
                        let om = mass * mass / ((x1 - x0) * (y1 - y0)) as f64;
                        let b = BBox::from_pixel_rect((x0, y0, x1, y1));
                        let better = match &best {
                            None => true,
                            Some((bo, bb)) => om > *bo || (om == *bo && b.tie_order(bb).is_lt()),
                        };
                        if better {
                            best = Some((om, b));
                        }
                    }
                }
            }
            let (om, b) = best.expect("every scanned zoom has at least one cell");
            (b, om)
        }
    }
}

/// Rescans each proposal with `net`; keeps those whose best heatmap cell
/// reaches `threshold`, with the box moved to the refined window.
pub fn verify_stage(
    proposals: &[Proposal],
    net: &NetworkSpec,
    image: &Tensor3,
    threshold: f64,
    cfg: &VerifyConfig,
) -> Result<Vec<Proposal>> {
    let stage = proposals.first().map_or(2, |p| p.source_stage + 1);
    let mut out = Vec::with_capacity(proposals.len());
    for p in proposals {
        let Some(region) = verification_region(p, image.width(), image.height()) else {
            continue;
        };
        let scan = scan_region(image, net, region, &cfg.zooms)?;
        let peak = scan.peak.0;
        if !(peak >= threshold) {
            continue;
        }
        let (local, omega) = refine(&scan, cfg.refine);
        let bbox = BBox::new(local.x + region.0 as f64, local.y + region.1 as f64, local.w, local.h);
        let mean_score = {
            let (x0, y0) = (local.x as usize, local.y as usize);
            let (x1, y1) = (x0 + local.w as usize, y0 + local.h as usize);
            IntegralImage::new(&scan.map).sum(x0, y0, x1, y1) / (local.area() * scan.map.contributing_streams as f64)
        };
        let mut trace = p.trace.clone();
        trace.push(StageBox {
            stage,
            bbox,
            score: peak,
        });
        out.push(Proposal {
            bbox,
            omega,
            mean_score,
            score: peak,
            source_stage: stage,
            bound: BBox::from_pixel_rect(region),
            trace,
        });
    }
    Ok(out)
}

/// Scores a box the way verification training samples are built: the
/// padded box resized to the net window, one heatmap cell.
pub fn crop_score(image: &Tensor3, net: &NetworkSpec, bbox: &BBox) -> Result<f64> {
    let window = net_geometry(net).window;
    let patch = crop_patch(image, &bbox.scaled(CONTEXT_PAD), window);
    Ok(net_forward(net, &patch)?.get(0, 0, 0))
}

/// `region` of `image` resampled to `side x side`; parts outside the image
/// repeat the border.
pub fn crop_patch(image: &Tensor3, region: &BBox, side: usize) -> Tensor3 {
    resize_region(image, region.x, region.y, region.w, region.h, side, side)
}
