//! On-disk formats: images, datasets, detections, curves and configuration.

pub mod config;
pub mod pnm;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::bbox::BBox;
use crate::dataset::{AnnotatedImage, AnnotationRecord};
use crate::error::{Error, Result};
use crate::eval::{CurveData, ScoredBox};
use crate::tensor::Tensor3;

pub use pnm::{read_image, write_image};

pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const IMAGES_DIR: &str = "images";
pub const BACKGROUNDS_DIR: &str = "backgrounds";

/// Writes `dir/images/<id>.ppm`, `dir/backgrounds/bgNNNNN.ppm` and
/// `dir/annotations.jsonl`.
pub fn write_dataset(dir: &Path, annotated: &[AnnotatedImage], backgrounds: &[Tensor3]) -> Result<()> {
    let images = dir.join(IMAGES_DIR);
    let bgs = dir.join(BACKGROUNDS_DIR);
    fs::create_dir_all(&images).map_err(Error::at_path(&images))?;
    fs::create_dir_all(&bgs).map_err(Error::at_path(&bgs))?;
    let mut lines = String::new();
    for a in annotated {
        write_image(&a.image, &images.join(format!("{}.ppm", a.id)))?;
        lines.push_str(&serde_json::to_string(&AnnotationRecord::of(a))?);
        lines.push('\n');
    }
    for (i, bg) in backgrounds.iter().enumerate() {
        write_image(bg, &bgs.join(format!("bg{i:05}.ppm")))?;
    }
    let ann = dir.join(ANNOTATIONS_FILE);
    fs::write(&ann, lines).map_err(Error::at_path(&ann))
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let text = fs::read_to_string(path).map_err(Error::at_path(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Dataset(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn sorted_ppms(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(Error::at_path(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ppm" || x == "pgm"))
        .collect();
    files.sort();
    Ok(files)
}

/// Reads a dataset written by [`write_dataset`]. Backgrounds are optional.
pub fn read_dataset(dir: &Path) -> Result<(Vec<AnnotatedImage>, Vec<Tensor3>)> {
    let records = read_annotations(&dir.join(ANNOTATIONS_FILE))?;
    let mut annotated = Vec::with_capacity(records.len());
    for r in records {
        let image = read_image(&dir.join(IMAGES_DIR).join(format!("{}.ppm", r.image)))?;
        let boxes = r.bboxes();
        if let Some(b) = boxes.iter().find(|b| !b.within_image(image.width(), image.height()) || b.is_degenerate()) {
            return Err(Error::Dataset(format!("{}: box {b:?} outside the image", r.image)));
        }
        annotated.push(AnnotatedImage {
            id: r.image,
            image,
            boxes,
        });
    }
    let backgrounds = sorted_ppms(&dir.join(BACKGROUNDS_DIR))?
        .iter()
        .map(|p| read_image(p))
        .collect::<Result<Vec<_>>>()?;
    Ok((annotated, backgrounds))
}

/// Images of a directory (`*.ppm`, `*.pgm`) keyed by file stem, sorted.
pub fn list_images(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    Ok(sorted_ppms(dir)?
        .into_iter()
        .map(|p| (p.file_stem().unwrap_or_default().to_string_lossy().into_owned(), p))
        .collect())
}

/// One `image_id x y w h confidence` line per detection.
pub fn format_detections(image: &str, dets: &[ScoredBox]) -> String {
    let mut out = String::new();
    for d in dets {
        let b = d.bbox;
        out.push_str(&format!("{image} {} {} {} {} {}\n", b.x, b.y, b.w, b.h, d.confidence));
    }
    out
}

pub fn parse_detections(text: &str) -> Result<BTreeMap<String, Vec<ScoredBox>>> {
    let mut out: BTreeMap<String, Vec<ScoredBox>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Dataset(format!("detections line {}: expected `image x y w h confidence`", n + 1));
        if fields.len() != 6 {
            return Err(bad());
        }
        let nums: Vec<f64> = fields[1..].iter().map(|f| f.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        out.entry(fields[0].to_string()).or_default().push(ScoredBox {
            bbox: BBox::new(nums[0], nums[1], nums[2], nums[3]),
            confidence: nums[4],
        });
    }
    Ok(out)
}

pub fn curve_csv(curve: &CurveData) -> String {
    let mut out = String::from("threshold,x,y\n");
    for p in &curve.points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.x, p.y));
    }
    out
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    {
        let mut f = fs::File::create(&tmp).map_err(Error::at_path(&tmp))?;
        f.write_all(bytes).map_err(Error::at_path(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(Error::at_path(path))
}
