//! Binary PGM (`P5`) dumps for debugging.
//!
//! | kind     | maxval | stored value                                   |
//! |----------|--------|------------------------------------------------|
//! | depth    | 65535  | `round(depth_m * 10000)`, 0 = background       |
//! | mask     | 255    | 255 = foreground, 0 = background               |
//! | distance | 65535  | `round(distance_px * 64)`, saturating          |
//!
//! The scaling is repeated in a `#` comment line of every file header.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{is_foreground_depth, DepthMap, DistanceField, Grid, SilhouetteMask, BACKGROUND_DEPTH};

pub const DEPTH_SCALE: f64 = 10_000.0;
pub const DISTANCE_SCALE: f64 = 64.0;

/// Decoded PGM raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: u32,
    pub height: u32,
    pub maxval: u16,
    pub comments: Vec<String>,
    pub pixels: Vec<u16>,
}

fn encode(width: u32, height: u32, maxval: u16, comment: &str, pixels: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n# {comment}\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval > 255 {
        for p in pixels {
            out.extend_from_slice(&p.to_be_bytes());
        }
    } else {
        out.extend(pixels.iter().map(|&p| p as u8));
    }
    out
}

pub fn encode_depth(depth: &DepthMap) -> Vec<u8> {
    let px: Vec<u16> = depth
        .data()
        .iter()
        .map(|&d| {
            if is_foreground_depth(d) {
                (d * DEPTH_SCALE).round().clamp(1.0, 65535.0) as u16
            } else {
                0
            }
        })
        .collect();
    encode(
        depth.width(),
        depth.height(),
        65535,
        "depth: value = round(depth_m * 10000), 0 = background",
        &px,
    )
}

pub fn encode_mask(mask: &SilhouetteMask) -> Vec<u8> {
    let px: Vec<u16> = mask
        .data()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    encode(
        mask.width(),
        mask.height(),
        255,
        "mask: 255 = foreground, 0 = background",
        &px,
    )
}

pub fn encode_distance(field: &DistanceField) -> Vec<u8> {
    let px: Vec<u16> = field
        .grid()
        .data()
        .iter()
        .map(|&d| (d * DISTANCE_SCALE).round().clamp(0.0, 65535.0) as u16)
        .collect();
    encode(
        field.width(),
        field.height(),
        65535,
        "distance: value = round(distance_px * 64), saturating at 65535",
        &px,
    )
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

pub fn decode(bytes: &[u8]) -> Result<Pgm> {
    let mut r = BufReader::new(bytes);
    let mut tokens: Vec<String> = Vec::new();
    let mut comments = Vec::new();
    let mut line_no = 0;
    while tokens.len() < 4 {
        let mut line = String::new();
        line_no += 1;
        if r.read_line(&mut line).map_err(|e| Error::io("<pgm>", e))? == 0 {
            return Err(Error::Parse {
                line: line_no,
                message: "truncated PGM header".into(),
            });
        }
        let line = line.trim();
        if let Some(c) = line.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        tokens.extend(line.split_whitespace().map(str::to_string));
    }
    let bad = |message: &str| Error::Parse {
        line: line_no,
        message: message.to_string(),
    };
    if tokens[0] != "P5" {
        return Err(bad("expected P5 magic"));
    }
    let width: u32 = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let height: u32 = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let maxval: u16 = tokens[3].parse().map_err(|_| bad("bad maxval"))?;
    let n = width as usize * height as usize;
    let mut raw = Vec::new();
    r.read_to_end(&mut raw).map_err(|e| Error::io("<pgm>", e))?;
    let pixels: Vec<u16> = if maxval > 255 {
        if raw.len() < 2 * n {
            return Err(bad("truncated pixel data"));
        }
        raw.chunks_exact(2)
            .take(n)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        if raw.len() < n {
            return Err(bad("truncated pixel data"));
        }
        raw[..n].iter().map(|&b| b as u16).collect()
    };
    Ok(Pgm {
        width,
        height,
        maxval,
        comments,
        pixels,
    })
}

pub fn read(path: &Path) -> Result<Pgm> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

impl Pgm {
    /// Interprets a 16-bit depth dump.
    pub fn to_depth(&self) -> DepthMap {
        let data = self
            .pixels
            .iter()
            .map(|&p| {
                if p == 0 {
                    BACKGROUND_DEPTH
                } else {
                    p as f64 / DEPTH_SCALE
                }
            })
            .collect();
        Grid::from_vec(self.width, self.height, (0, 0), data).expect("sized by header")
    }

    /// Any nonzero pixel is foreground.
    pub fn to_mask(&self) -> SilhouetteMask {
        let data = self.pixels.iter().map(|&p| p != 0).collect();
        Grid::from_vec(self.width, self.height, (0, 0), data).expect("sized by header")
    }
}
