//! Binary PPM (P6) and PGM (P5) images with 8-bit samples, plus 16-bit PGM
//! score-map dumps.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::score_map::ScoreMap;
use crate::tensor::Tensor3;

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(Error::ImageFormat("expected P5 or P6 magic".into())),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments may separate header fields
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::ImageFormat("header ends early".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::ImageFormat(format!("expected a number at byte {start}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::ImageFormat(format!("header number {text} out of range")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::ImageFormat("missing whitespace after header".into())),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::ImageFormat(format!("degenerate size {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::ImageFormat(format!("only 8-bit samples are supported, maxval is {maxval}")));
    }
    Ok(Header {
        channels,
        width,
        height,
        maxval,
        data_start: pos,
    })
}

/// Decodes P5/P6 bytes to a depth-3 tensor in `[0, 1]`; grey is replicated.
pub fn decode_pnm(bytes: &[u8]) -> Result<Tensor3> {
    let h = parse_header(bytes)?;
    let n = h.width * h.height * h.channels;
    let data = bytes
        .get(h.data_start..h.data_start + n)
        .ok_or_else(|| Error::ImageFormat(format!("payload truncated: expected {n} bytes")))?;
    let scale = h.maxval as f64;
    Ok(Tensor3::from_fn(h.width, h.height, 3, |x, y, c| {
        let px = (y * h.width + x) * h.channels;
        let c = if h.channels == 1 { 0 } else { c };
        data[px + c] as f64 / scale
    }))
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes a depth-3 tensor as P6 (depth 1 as P5) with a canonical header.
pub fn encode_pnm(image: &Tensor3) -> Result<Vec<u8>> {
    let magic = match image.depth() {
        3 => "P6",
        1 => "P5",
        d => return Err(Error::InvalidImage(format!("cannot encode {d} channels"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|&v| to_byte(v)));
    Ok(out)
}

pub fn read_image(path: &Path) -> Result<Tensor3> {
    let bytes = fs::read(path).map_err(Error::at_path(path))?;
    decode_pnm(&bytes).map_err(|e| match e {
        Error::ImageFormat(msg) => Error::ImageFormat(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_image(image: &Tensor3, path: &Path) -> Result<()> {
    fs::write(path, encode_pnm(image)?).map_err(Error::at_path(path))
}

/// 16-bit PGM with values mapped linearly from `[0, scale]` to `[0, 65535]`;
/// `scale` (the map maximum, or 1 for an all-zero map) is kept in a comment.
pub fn encode_score_map_pgm(map: &ScoreMap) -> Vec<u8> {
    let max = map.max();
    let scale = if max > 0.0 { max } else { 1.0 };
    let mut out = format!("P5\n# scale {scale}\n{} {}\n65535\n", map.width, map.height).into_bytes();
    for &v in &map.values {
        let q = (v / scale * 65535.0).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn score_map_csv(map: &ScoreMap) -> String {
    let mut out = String::with_capacity(map.values.len() * 8);
    for row in map.values.chunks(map.width) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
