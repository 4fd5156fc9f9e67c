use serde::{Deserialize, Serialize};

use super::layer::{LayerKind, NetworkSpec};

/// Receptive-field geometry of a whole network in input pixels.
///
/// Heatmap cell `(i, j)` (row `i`, column `j`) sees the square of side
/// `window` whose top-left corner is `(offset + j * stride, offset + i * stride)`.
/// `offset` is negative when layers pad their input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetGeometry {
    pub stride: usize,
    pub window: usize,
    pub offset: i64,
}

impl NetGeometry {
    /// Top-left corner of a cell's receptive field along one axis.
    #[inline]
    pub fn field_start(&self, cell: usize) -> i64 {
        self.offset + (cell * self.stride) as i64
    }

    /// Field of a cell along one axis clamped to `[0, len)`, as a half-open range.
    pub fn clamped_field(&self, cell: usize, len: usize) -> (usize, usize) {
        let start = self.field_start(cell);
        let end = start + self.window as i64;
        let lo = start.clamp(0, len as i64) as usize;
        let hi = end.clamp(0, len as i64) as usize;
        (lo, hi)
    }

    /// Number of heatmap cells along an axis of `len` input pixels for a
    /// padding-free network: a cell exists exactly when its field fits.
    pub fn cells_for(&self, len: usize) -> usize {
        if len < self.window {
            0
        } else {
            (len - self.window) / self.stride + 1
        }
    }
}

/// Composes stride, receptive window and field origin layer by layer.
///
/// Each layer with kernel `k`, stride `s` and padding `p` maps
/// `window += (k - 1) * jump`, `offset -= p * jump`, `jump *= s`.
pub fn net_geometry(net: &NetworkSpec) -> NetGeometry {
    let mut jump = 1usize;
    let mut window = 1usize;
    let mut offset = 0i64;
    for layer in &net.layers {
        if layer.kind == LayerKind::Relu {
            continue;
        }
        window += (layer.kernel - 1) * jump;
        offset -= (layer.padding * jump) as i64;
        jump *= layer.stride;
    }
    NetGeometry {
        stride: jump,
        window,
        offset,
    }
}
