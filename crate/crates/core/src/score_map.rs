//! Back-projection of heatmaps to image resolution, stream fusion, and box
//! proposals ranked by an integral-image box score.

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::nn::NetGeometry;
use crate::pyramid::{ScaledImage, Stream};
use crate::tensor::Tensor3;

/// Per-pixel face score at original resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    pub width: usize,
    pub height: usize,
    /// Row-major, `width * height` entries.
    pub values: Vec<f64>,
    pub contributing_streams: usize,
}

impl ScoreMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            contributing_streams: 0,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Values divided by the number of fused streams, so each pixel lies in `[0, 1]`.
    pub fn normalized_values(&self) -> Vec<f64> {
        let n = self.contributing_streams.max(1) as f64;
        self.values.iter().map(|v| v / n).collect()
    }
}

/// Receptive-field layout of one stream mapped to original pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamGrid {
    pub geom: NetGeometry,
    pub level_size: (usize, usize),
    pub original_size: (usize, usize),
    /// Heatmap columns and rows.
    pub cells: (usize, usize),
}

impl StreamGrid {
    pub fn new(geom: NetGeometry, level: &ScaledImage, heatmap: &Tensor3) -> Result<Self> {
        let grid = Self {
            geom,
            level_size: (level.tensor.width(), level.tensor.height()),
            original_size: level.original_size,
            cells: (heatmap.width(), heatmap.height()),
        };
        grid.validate()?;
        Ok(grid)
    }

    fn validate(&self) -> Result<()> {
        let (cols, rows) = self.cells;
        let (lw, lh) = self.level_size;
        let fits = |cells: usize, len: usize| {
            cells >= 1
                && self.geom.field_start(cells - 1) < len as i64
                && (self.geom.offset != 0 || cells == self.geom.cells_for(len))
        };
        if !fits(cols, lw) || !fits(rows, lh) {
            return Err(Error::ShapeMismatch(format!(
                "{cols}x{rows} heatmap does not match a {lw}x{lh} level with stride {} and window {}",
                self.geom.stride, self.geom.window
            )));
        }
        Ok(())
    }

    /// Per-axis ratio of level pixels to original pixels.
    pub fn scales(&self) -> (f64, f64) {
        (
            self.level_size.0 as f64 / self.original_size.0 as f64,
            self.level_size.1 as f64 / self.original_size.1 as f64,
        )
    }

    /// Receptive field of cell `(col, row)` clamped to the level, in original
    /// (unrounded) coordinates.
    pub fn field_box(&self, col: usize, row: usize) -> BBox {
        let (sx, sy) = self.scales();
        let (x0, x1) = self.geom.clamped_field(col, self.level_size.0);
        let (y0, y1) = self.geom.clamped_field(row, self.level_size.1);
        BBox::new(
            x0 as f64 / sx,
            y0 as f64 / sy,
            (x1 - x0) as f64 / sx,
            (y1 - y0) as f64 / sy,
        )
    }

    /// Integer pixel rectangle `(x0, y0, x1, y1)` a cell projects onto.
    pub fn field_rect(&self, col: usize, row: usize) -> (usize, usize, usize, usize) {
        // round each edge from level coordinates; going through x + w can
        // land on the other side of a .5 boundary
        let (sx, sy) = self.scales();
        let snap = |(lo, hi): (usize, usize), scale: f64, len: usize| {
            let len = len as i64;
            let a = ((lo as f64 / scale).round() as i64).clamp(0, len - 1);
            let b = ((hi as f64 / scale).round() as i64).clamp(a + 1, len);
            (a as usize, b as usize)
        };
        let (x0, x1) = snap(self.geom.clamped_field(col, self.level_size.0), sx, self.original_size.0);
        let (y0, y1) = snap(self.geom.clamped_field(row, self.level_size.1), sy, self.original_size.1);
        (x0, y0, x1, y1)
    }

    /// Side of one receptive window in original pixels, along the long axis.
    pub fn effective_window(&self) -> f64 {
        let (sx, sy) = self.scales();
        self.geom.window as f64 / sx.min(sy)
    }
}

/// Summed scores and coverage counts of one stream before normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub width: usize,
    pub height: usize,
    pub sum: Vec<f64>,
    pub coverage: Vec<u32>,
}

impl Projection {
    pub fn mass(&self) -> f64 {
        self.sum.iter().sum()
    }

    /// Per-pixel mean over the cells covering it; uncovered pixels are 0.
    pub fn into_score_map(self) -> ScoreMap {
        let values = self
            .sum
            .iter()
            .zip(&self.coverage)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect();
        ScoreMap {
            width: self.width,
            height: self.height,
            values,
            contributing_streams: 1,
        }
    }
}

/// Adds each cell's score to every original pixel of its field, tracking
/// how many fields cover each pixel.
pub fn project_sum(heatmap: &Tensor3, grid: &StreamGrid) -> Result<Projection> {
    if heatmap.depth() != 1 || (heatmap.width(), heatmap.height()) != grid.cells {
        return Err(Error::ShapeMismatch(format!(
            "{}x{}x{} heatmap for a {}x{} grid",
            heatmap.width(),
            heatmap.height(),
            heatmap.depth(),
            grid.cells.0,
            grid.cells.1
        )));
    }
    let (w, h) = grid.original_size;
    let stride = w + 1;
    // corner-difference arrays: a rectangle becomes four point updates
    let mut sum_diff = vec![0.0f64; stride * (h + 1)];
    let mut cov_diff = vec![0i64; stride * (h + 1)];
    for row in 0..grid.cells.1 {
        for col in 0..grid.cells.0 {
            let score = heatmap.get(col, row, 0);
            let (x0, y0, x1, y1) = grid.field_rect(col, row);
            for (idx, sign) in [(y0 * stride + x0, 1), (y0 * stride + x1, -1), (y1 * stride + x0, -1), (y1 * stride + x1, 1)] {
                sum_diff[idx] += sign as f64 * score;
                cov_diff[idx] += sign;
            }
        }
    }
    let mut sum = vec![0.0; w * h];
    let mut coverage = vec![0u32; w * h];
    let mut row_sum = vec![0.0f64; w];
    let mut row_cov = vec![0i64; w];
    for y in 0..h {
        let (mut run_s, mut run_c) = (0.0, 0i64);
        for x in 0..w {
            run_s += sum_diff[y * stride + x];
            run_c += cov_diff[y * stride + x];
            row_sum[x] += run_s;
            row_cov[x] += run_c;
            coverage[y * w + x] = row_cov[x] as u32;
            // cancelled contributions can leave rounding dust on uncovered pixels
            sum[y * w + x] = if row_cov[x] == 0 { 0.0 } else { row_sum[x] };
        }
    }
    Ok(Projection {
        width: w,
        height: h,
        sum,
        coverage,
    })
}

/// Coverage-mean projection of one stream, values in `[0, 1]`.
pub fn project_heatmap(heatmap: &Tensor3, grid: &StreamGrid) -> Result<ScoreMap> {
    Ok(project_sum(heatmap, grid)?.into_score_map())
}

/// Elementwise sum of projected maps.
pub fn fuse_streams(maps: &[ScoreMap]) -> Result<ScoreMap> {
    let Some(first) = maps.first() else {
        return Err(Error::EmptyPyramid);
    };
    let mut fused = ScoreMap::zeros(first.width, first.height);
    for map in maps {
        if (map.width, map.height) != (fused.width, fused.height) {
            return Err(Error::ShapeMismatch(format!(
                "cannot fuse a {}x{} map into {}x{}",
                map.width, map.height, fused.width, fused.height
            )));
        }
        fused.values.iter_mut().zip(&map.values).for_each(|(a, b)| *a += b);
        fused.contributing_streams += map.contributing_streams;
    }
    Ok(fused)
}

/// Projects every stream and fuses them in stream order.
pub fn score_streams(streams: &[Stream<'_>], geom: NetGeometry) -> Result<(ScoreMap, Vec<StreamGrid>)> {
    let grids = streams
        .iter()
        .map(|s| StreamGrid::new(geom, s.level, &s.heatmap))
        .collect::<Result<Vec<_>>>()?;
    let maps = streams
        .iter()
        .zip(&grids)
        .map(|(s, g)| project_heatmap(&s.heatmap, g))
        .collect::<Result<Vec<_>>>()?;
    Ok((fuse_streams(&maps)?, grids))
}

/// Summed-area table with a zero first row and column.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegralImage {
    pub width: usize,
    pub height: usize,
    /// `(width + 1) * (height + 1)` entries, row-major.
    pub table: Vec<f64>,
}

impl IntegralImage {
    pub fn new(map: &ScoreMap) -> Self {
        Self::from_values(map.width, map.height, &map.values)
    }

    pub fn from_values(width: usize, height: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), width * height);
        let stride = width + 1;
        let mut table = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let mut run = 0.0;
            for x in 0..width {
                run += values[y * width + x];
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + run;
            }
        }
        Self { width, height, table }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.table[y * (self.width + 1) + x]
    }

    /// Mass of the half-open pixel rectangle `[x0, x1) x [y0, y1)`; 0 when empty.
    pub fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        self.at(x1, y1) - self.at(x0, y1) - self.at(x1, y0) + self.at(x0, y0)
    }

    pub fn total(&self) -> f64 {
        self.at(self.width, self.height)
    }
}

/// Box score `mass * (mass / area)`. The box must have integer corners
/// inside the map and cover at least one pixel.
pub fn box_score(table: &IntegralImage, bbox: &BBox) -> Result<f64> {
    let integral = [bbox.x, bbox.y, bbox.w, bbox.h].iter().all(|v| v.fract() == 0.0);
    if !integral || bbox.w < 1.0 || bbox.h < 1.0 || !bbox.within_image(table.width, table.height) {
        return Err(Error::BoxOutOfBounds(
            format!("({}, {}, {}, {})", bbox.x, bbox.y, bbox.w, bbox.h),
            table.width,
            table.height,
        ));
    }
    let (x0, y0) = (bbox.x as usize, bbox.y as usize);
    let (x1, y1) = (x0 + bbox.w as usize, y0 + bbox.h as usize);
    Ok(omega(table, x0, y0, x1, y1))
}

#[inline]
fn omega(table: &IntegralImage, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
    let mass = table.sum(x0, y0, x1, y1);
    let area = ((x1 - x0) * (y1 - y0)) as f64;
    mass * (mass / area)
}

/// Stage-1 proposal picking parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProposalConfig {
    /// Minimum box score on the stream-normalized map.
    pub threshold: f64,
    pub enlarge_factor: f64,
    pub dedup_iou: f64,
    pub max_proposals: usize,
    /// Heatmap score a cell needs for its field to be a candidate box when
    /// proposals are picked from streams; 0 admits every cell.
    pub min_cell_score: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            // a 30px window at mean score 0.5
            threshold: 0.25 * 30.0 * 30.0,
            enlarge_factor: 1.2,
            dedup_iou: 0.5,
            max_proposals: 50,
            min_cell_score: 0.5,
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            return Err(Error::Config(format!("proposal threshold {} must be >= 0", self.threshold)));
        }
        if !(self.enlarge_factor.is_finite() && self.enlarge_factor >= 1.0) {
            return Err(Error::Config(format!("enlarge factor {} must be >= 1", self.enlarge_factor)));
        }
        if !(self.dedup_iou > 0.0 && self.dedup_iou <= 1.0) {
            return Err(Error::Config(format!("dedup IoU {} must be in (0, 1]", self.dedup_iou)));
        }
        if self.max_proposals == 0 {
            return Err(Error::Config("max_proposals must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.min_cell_score) {
            return Err(Error::Config(format!("min_cell_score {} must be in [0, 1]", self.min_cell_score)));
        }
        Ok(())
    }
}

/// Candidate face box passed between cascade stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub bbox: BBox,
    /// Box score on the normalized stage-1 map (0 for later stages).
    pub omega: f64,
    /// Mean fused score inside the box, in `[0, contributing_streams]`.
    pub mean_score: f64,
    /// Stage confidence in `[0, 1]`: normalized mean for stage 1, heatmap
    /// peak for verification stages.
    pub score: f64,
    pub source_stage: u8,
    /// Region later stages may not leave.
    pub bound: BBox,
    /// Box and score after each stage that has handled this proposal.
    #[serde(default)]
    pub trace: Vec<StageBox>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageBox {
    pub stage: u8,
    pub bbox: BBox,
    pub score: f64,
}

/// Every receptive field of every stream, enlarged, as integer pixel rectangles.
pub fn candidate_rects(grids: &[StreamGrid], enlarge_factor: f64) -> Vec<(usize, usize, usize, usize)> {
    collect_rects(grids, enlarge_factor, |_, _, _| true)
}

/// Enlarged fields of the cells scoring at least `min_score` in their own
/// stream's heatmap; `heatmaps[i]` belongs to `grids[i]`.
pub fn fired_candidate_rects(
    grids: &[StreamGrid],
    heatmaps: &[&Tensor3],
    enlarge_factor: f64,
    min_score: f64,
) -> Vec<(usize, usize, usize, usize)> {
    collect_rects(grids, enlarge_factor, |i, col, row| heatmaps[i].get(col, row, 0) >= min_score)
}

fn collect_rects(
    grids: &[StreamGrid],
    enlarge_factor: f64,
    keep: impl Fn(usize, usize, usize) -> bool,
) -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    for (i, grid) in grids.iter().enumerate() {
        let (w, h) = grid.original_size;
        for row in 0..grid.cells.1 {
            for col in 0..grid.cells.0 {
                if keep(i, col, row) {
                    let b = grid.field_box(col, row).scaled(enlarge_factor).clamp_to(w, h);
                    out.push(b.pixel_rect(w, h));
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Greedy highest-first suppression. `items` must already be ranked.
pub fn suppress<T>(items: Vec<T>, bbox: impl Fn(&T) -> BBox, iou: f64, cap: usize) -> Vec<T> {
    let mut kept: Vec<T> = Vec::new();
    for item in items {
        if kept.len() >= cap {
            break;
        }
        let b = bbox(&item);
        if kept.iter().all(|k| bbox(k).iou(&b) < iou) {
            kept.push(item);
        }
    }
    kept
}

/// Picks stage-1 proposals from a fused score map.
pub fn propose_boxes(map: &ScoreMap, grids: &[StreamGrid], cfg: &ProposalConfig) -> Vec<Proposal> {
    rank_candidates(map, candidate_rects(grids, cfg.enlarge_factor), cfg)
}

/// Like [`propose_boxes`], but only cells scoring at least
/// `cfg.min_cell_score` in their own heatmap put their field forward.
pub fn propose_from_streams(map: &ScoreMap, grids: &[StreamGrid], heatmaps: &[&Tensor3], cfg: &ProposalConfig) -> Result<Vec<Proposal>> {
    if grids.len() != heatmaps.len() || grids.iter().zip(heatmaps).any(|(g, h)| (h.width(), h.height()) != g.cells) {
        return Err(Error::ShapeMismatch("one heatmap per stream grid expected".into()));
    }
    let rects = fired_candidate_rects(grids, heatmaps, cfg.enlarge_factor, cfg.min_cell_score);
    Ok(rank_candidates(map, rects, cfg))
}

fn rank_candidates(map: &ScoreMap, rects: Vec<(usize, usize, usize, usize)>, cfg: &ProposalConfig) -> Vec<Proposal> {
    if map.contributing_streams == 0 || map.width == 0 || map.height == 0 {
        return Vec::new();
    }
    let streams = map.contributing_streams as f64;
    let table = IntegralImage::from_values(map.width, map.height, &map.normalized_values());
    let image = BBox::new(0.0, 0.0, map.width as f64, map.height as f64);
    let mut scored: Vec<Proposal> = rects
        .into_iter()
        .filter_map(|(x0, y0, x1, y1)| {
            let om = omega(&table, x0, y0, x1, y1);
            if !(om > 0.0 && om >= cfg.threshold) {
                return None;
            }
            let mean = table.sum(x0, y0, x1, y1) / ((x1 - x0) * (y1 - y0)) as f64;
            let bbox = BBox::from_pixel_rect((x0, y0, x1, y1));
            let score = mean.clamp(0.0, 1.0);
            Some(Proposal {
                bbox,
                omega: om,
                mean_score: mean * streams,
                score,
                source_stage: 1,
                bound: image,
                trace: vec![StageBox { stage: 1, bbox, score }],
            })
        })
        .collect();
    scored.sort_by(|a, b| b.omega.total_cmp(&a.omega).then(a.bbox.tie_order(&b.bbox)));
    suppress(scored, |p| p.bbox, cfg.dedup_iou, cfg.max_proposals)
}
