//! Weight files.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! magic      b"FCNW"
//! version    u32 (= 1)
//! layers     u32
//! per layer:
//!   kind     u32   0 conv, 1 max pool, 2 relu, 3 fully-conv head
//!   kernel   u32
//!   stride   u32
//!   padding  u32
//!   in       u32
//!   out      u32
//!   weights  f64 * (kernel^2 * in * out)   parametric layers only
//!   biases   f64 * out                     parametric layers only
//! ```
//!
//! The network name is not stored; callers supply it when decoding.

use std::path::Path;

use super::layer::{LayerKind, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FCNW";
pub const VERSION: u32 = 1;

pub fn encode_network(net: &NetworkSpec) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + net.param_count() * 8 + net.layers.len() * 24);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
    for layer in &net.layers {
        for v in [
            layer.kind.tag(),
            layer.kernel as u32,
            layer.stride as u32,
            layer.padding as u32,
            layer.in_channels as u32,
            layer.out_channels as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in layer.weights.iter().chain(&layer.biases) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::CorruptWeights(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::CorruptWeights("size overflow".into()))?, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_network(bytes: &[u8], name: &str) -> Result<NetworkSpec> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::CorruptWeights("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::CorruptWeights(format!("unsupported version {version}")));
    }
    let count = r.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let tag = r.u32("layer kind")?;
        let kind = LayerKind::from_tag(tag)
            .ok_or_else(|| Error::CorruptWeights(format!("layer {i}: unknown kind tag {tag}")))?;
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = r.u32("layer header")? as usize;
        }
        let [kernel, stride, padding, in_channels, out_channels] = dims;
        let mut layer = LayerSpec {
            kind,
            kernel,
            stride,
            padding,
            in_channels,
            out_channels,
            weights: Vec::new(),
            biases: Vec::new(),
        };
        if kind.is_parametric() {
            let n = kernel
                .checked_mul(kernel)
                .and_then(|v| v.checked_mul(in_channels))
                .and_then(|v| v.checked_mul(out_channels))
                .ok_or_else(|| Error::CorruptWeights(format!("layer {i}: size overflow")))?;
            layer.weights = r.f64s(n, "weights")?;
            layer.biases = r.f64s(out_channels, "biases")?;
        }
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptWeights(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    NetworkSpec::new(name, layers).map_err(|e| Error::CorruptWeights(e.to_string()))
}

pub fn write_weights(net: &NetworkSpec, path: &Path) -> Result<()> {
    std::fs::write(path, encode_network(net)).map_err(Error::at_path(path))
}

pub fn read_weights(path: &Path, name: &str) -> Result<NetworkSpec> {
    let bytes = std::fs::read(path).map_err(Error::at_path(path))?;
    decode_network(&bytes, name)
}

/// Human-readable mirror of the binary format.
pub fn to_json(net: &NetworkSpec) -> String {
    serde_json::to_string_pretty(net).expect("network serialises")
}

pub fn from_json(text: &str) -> Result<NetworkSpec> {
    let net: NetworkSpec = serde_json::from_str(text)?;
    net.validate()?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{arch, init_weights};

    #[test]
    fn binary_and_json_round_trip() {
        let mut net = arch::stage1();
        init_weights(&mut net, 3);
        let bytes = encode_network(&net);
        assert_eq!(&bytes[..4], b"FCNW");
        assert_eq!(decode_network(&bytes, &net.name).unwrap(), net);
        assert_eq!(from_json(&to_json(&net)).unwrap(), net);
    }

    #[test]
    fn corrupt_inputs() {
        let net = arch::stage1();
        let bytes = encode_network(&net);
        for cut in [0, 3, 8, 11, 20, bytes.len() - 1] {
            assert!(matches!(
                decode_network(&bytes[..cut], "x"),
                Err(Error::CorruptWeights(_))
            ));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_network(&bad, "x").is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode_network(&bad, "x").is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode_network(&long, "x").is_err());
    }
}
