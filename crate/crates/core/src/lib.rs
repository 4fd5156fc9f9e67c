//! Multi-scale fully convolutional cascade detector.
//!
//! A shared-parameter FCN runs over an image pyramid; its heatmaps are
//! projected back to the original resolution and summed into a score map,
//! from which box proposals are picked with an integral-image box score.
//! Two deeper FCNs then rescan each proposal to reject it or zoom in on it.

pub mod bbox;
pub mod cascade;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod io;
pub mod nn;
pub mod pyramid;
pub mod score_map;
pub mod tensor;
pub mod trainer;

pub use bbox::BBox;
pub use error::{Error, Result};
pub use tensor::Tensor3;
