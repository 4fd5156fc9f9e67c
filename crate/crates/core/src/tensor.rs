//! Dense `width x height x depth` arrays used for images, feature maps and heatmaps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A three dimensional array stored row-major in `(y, x, channel)` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    width: usize,
    height: usize,
    depth: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(width: usize, height: usize, depth: usize) -> Self {
        Self::filled(width, height, depth, 0.0)
    }

    pub fn filled(width: usize, height: usize, depth: usize, value: f64) -> Self {
        assert!(width >= 1 && height >= 1 && depth >= 1, "tensor dims must be >= 1");
        Self {
            width,
            height,
            depth,
            data: vec![value; width * height * depth],
        }
    }

    pub fn from_vec(width: usize, height: usize, depth: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || depth == 0 {
            return Err(Error::ShapeMismatch(format!(
                "tensor dims must be >= 1, got {width}x{height}x{depth}"
            )));
        }
        if data.len() != width * height * depth {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height}x{depth} tensor needs {} values, got {}",
                width * height * depth,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch(format!("non-finite value at index {bad}")));
        }
        Ok(Self {
            width,
            height,
            depth,
            data,
        })
    }

    /// Builds a tensor by evaluating `f(x, y, c)` at every element.
    pub fn from_fn(
        width: usize,
        height: usize,
        depth: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut t = Self::zeros(width, height, depth);
        for y in 0..height {
            for x in 0..width {
                for c in 0..depth {
                    t.data[(y * width + x) * depth + c] = f(x, y, c);
                }
            }
        }
        t
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.depth
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        debug_assert!(x < self.width && y < self.height && c < self.depth);
        (y * self.width + x) * self.depth + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        let i = self.index(x, y, c);
        self.data[i] = value;
    }

    /// The `depth` values at one spatial location.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.depth;
        &self.data[i..i + self.depth]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            depth: self.depth,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copies the `w x h` window whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::ShapeMismatch(format!(
                "crop ({x},{y},{w},{h}) outside {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h * self.depth);
        for row in y..y + h {
            let start = (row * self.width + x) * self.depth;
            data.extend_from_slice(&self.data[start..start + w * self.depth]);
        }
        Ok(Self {
            width: w,
            height: h,
            depth: self.depth,
            data,
        })
    }

    /// Replicates a single-channel tensor to three channels; other depths are returned as is.
    pub fn to_rgb(&self) -> Self {
        if self.depth != 1 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Self {
            width: self.width,
            height: self.height,
            depth: 3,
            data,
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.depth == other.depth
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_y_x_channel() {
        let t = Tensor3::from_fn(3, 2, 2, |x, y, c| (100 * y + 10 * x + c) as f64);
        assert_eq!(t.data()[0..4], [0.0, 1.0, 10.0, 11.0]);
        assert_eq!(t.get(2, 1, 1), 121.0);
        assert_eq!(t.pixel(1, 1), &[110.0, 111.0]);
    }

    #[test]
    fn from_vec_checks_length_and_finiteness() {
        assert!(Tensor3::from_vec(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Tensor3::from_vec(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(Tensor3::from_vec(0, 1, 1, vec![]).is_err());
    }

    #[test]
    fn crop_and_replicate() {
        let t = Tensor3::from_fn(4, 4, 1, |x, y, _| (y * 4 + x) as f64);
        let c = t.crop(1, 2, 2, 2).unwrap();
        assert_eq!(c.data(), &[9.0, 10.0, 13.0, 14.0]);
        let rgb = c.to_rgb();
        assert_eq!(rgb.depth(), 3);
        assert_eq!(rgb.pixel(1, 1), &[14.0, 14.0, 14.0]);
        assert!(t.crop(3, 3, 2, 1).is_err());
    }
}
