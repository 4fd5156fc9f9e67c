//! Annotated images and their on-disk annotation records.

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::tensor::Tensor3;

/// An RGB image with its ground-truth face boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedImage {
    pub id: String,
    pub image: Tensor3,
    pub boxes: Vec<BBox>,
}

/// One line of an annotation file: `{"image": id, "boxes": [[x, y, w, h], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub image: String,
    pub boxes: Vec<[f64; 4]>,
}

impl AnnotationRecord {
    pub fn of(image: &AnnotatedImage) -> Self {
        Self {
            image: image.id.clone(),
            boxes: image.boxes.iter().map(|b| [b.x, b.y, b.w, b.h]).collect(),
        }
    }

    pub fn bboxes(&self) -> Vec<BBox> {
        self.boxes.iter().map(|&[x, y, w, h]| BBox::new(x, y, w, h)).collect()
    }
}
