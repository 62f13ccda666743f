//! Depth and semantic images plus their portable-graymap encodings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::camera::{WORKING_HEIGHT, WORKING_WIDTH};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum SemanticClass {
    Unknown = 0,
    Drivable = 1,
    Obstacle = 2,
}

impl SemanticClass {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SemanticClass::Unknown),
            1 => Some(SemanticClass::Drivable),
            2 => Some(SemanticClass::Obstacle),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Per-pixel metric depth; `0.0` marks an invalid pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::contract("depth buffer size does not match dimensions"));
        }
        if data.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::contract("depth values must be finite and non-negative"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, depth: f64) {
        assert!(depth.is_finite() && depth >= 0.0);
        self.data[v * self.width + u] = depth;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemanticImage {
    width: usize,
    height: usize,
    data: Vec<SemanticClass>,
}

impl SemanticImage {
    pub fn new(width: usize, height: usize, data: Vec<SemanticClass>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::contract("semantic buffer size does not match dimensions"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, class: SemanticClass) -> Self {
        Self {
            width,
            height,
            data: vec![class; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, u: usize, v: usize) -> SemanticClass {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, class: SemanticClass) {
        self.data[v * self.width + u] = class;
    }

    pub fn data(&self) -> &[SemanticClass] {
        &self.data
    }
}

/// Opaque handle on the RGB frame. Planning code never looks inside.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RgbRef {
    Path(PathBuf),
    Blob(Vec<u8>),
}

struct PnmHeader {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: u32,
    comments: Vec<String>,
    data_offset: usize,
}

fn parse_pnm_header(bytes: &[u8]) -> Result<PnmHeader> {
    if bytes.len() < 2 {
        return Err(Error::parse(0, "truncated header"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut comments = Vec::new();
    let mut fields = [0u64; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    let start = pos + 1;
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    comments.push(String::from_utf8_lossy(&bytes[start..pos]).trim().to_string());
                }
                Some(_) => break,
                None => return Err(Error::parse(pos, "truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(pos, format!("expected header field {}", i + 1)));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::parse(start, "header value out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::parse(pos, "expected whitespace after maxval")),
    }
    if fields[0] == 0 || fields[1] == 0 {
        return Err(Error::parse(2, "zero image dimension"));
    }
    if fields[2] == 0 || fields[2] > 65535 {
        return Err(Error::parse(pos - 1, "maxval must be in 1..=65535"));
    }
    Ok(PnmHeader {
        magic,
        width: fields[0] as usize,
        height: fields[1] as usize,
        maxval: fields[2] as u32,
        comments,
        data_offset: pos,
    })
}

fn read_samples(bytes: &[u8], h: &PnmHeader) -> Result<Vec<u16>> {
    if &h.magic != b"P5" {
        return Err(Error::parse(0, "expected binary graymap (P5)"));
    }
    let wide = h.maxval > 255;
    let bps = if wide { 2 } else { 1 };
    let need = h.width * h.height * bps;
    let body = &bytes[h.data_offset..];
    if body.len() < need {
        return Err(Error::parse(
            bytes.len(),
            format!("pixel data truncated: need {need} bytes, found {}", body.len()),
        ));
    }
    if body.len() > need {
        return Err(Error::parse(h.data_offset + need, "trailing bytes after pixel data"));
    }
    Ok(if wide {
        body.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        body.iter().map(|&b| b as u16).collect()
    })
}

/// Decodes a 16-bit graymap whose header carries `# depth-scale <m/unit>`.
/// Without that comment a scale of 1 mm per unit is assumed.
pub fn parse_depth_pgm(bytes: &[u8]) -> Result<DepthImage> {
    let h = parse_pnm_header(bytes)?;
    let mut scale = None;
    for c in &h.comments {
        if let Some(rest) = c.strip_prefix("depth-scale") {
            let v: f64 = rest
                .trim()
                .parse()
                .map_err(|_| Error::parse(2, format!("bad depth-scale `{}`", rest.trim())))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::parse(2, "depth-scale must be positive"));
            }
            scale = Some(v);
        }
    }
    let scale = scale.unwrap_or_else(|| {
        log::warn!("depth graymap has no depth-scale comment; assuming 0.001 m/unit");
        0.001
    });
    let raw = read_samples(bytes, &h)?;
    let data = raw.into_iter().map(|v| v as f64 * scale).collect();
    DepthImage::new(h.width, h.height, data)
}

pub fn parse_semantic_pgm(bytes: &[u8]) -> Result<SemanticImage> {
    let h = parse_pnm_header(bytes)?;
    if h.maxval > 255 {
        return Err(Error::parse(2, "semantic graymap must be 8-bit"));
    }
    let raw = read_samples(bytes, &h)?;
    let mut data = Vec::with_capacity(raw.len());
    for (i, v) in raw.into_iter().enumerate() {
        let class = SemanticClass::from_code(v as u8)
            .ok_or_else(|| Error::parse(h.data_offset + i, format!("invalid semantic code {v}")))?;
        data.push(class);
    }
    SemanticImage::new(h.width, h.height, data)
}

fn header_bytes(magic: &str, width: usize, height: usize, maxval: u32, comments: &[String]) -> Vec<u8> {
    let mut out = format!("{magic}\n");
    for c in comments {
        for line in c.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
    }
    out.push_str(&format!("{width} {height}\n{maxval}\n"));
    out.into_bytes()
}

pub fn encode_depth_pgm(img: &DepthImage, scale: f64, comments: &[String]) -> Vec<u8> {
    let mut all = comments.to_vec();
    all.push(format!("depth-scale {scale}"));
    let mut out = header_bytes("P5", img.width, img.height, 65535, &all);
    for &d in &img.data {
        let units = (d / scale).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&units.to_be_bytes());
    }
    out
}

pub fn encode_semantic_pgm(img: &SemanticImage, comments: &[String]) -> Vec<u8> {
    let mut out = header_bytes("P5", img.width, img.height, 255, comments);
    out.extend(img.data.iter().map(|c| c.code()));
    out
}

/// 8-bit graymap of arbitrary samples (used for masks).
pub fn encode_gray8(width: usize, height: usize, data: &[u8], comments: &[String]) -> Vec<u8> {
    let mut out = header_bytes("P5", width, height, 255, comments);
    out.extend_from_slice(data);
    out
}

/// Returns (width, height, samples scaled to [0, 1]).
pub fn parse_gray(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let h = parse_pnm_header(bytes)?;
    let raw = read_samples(bytes, &h)?;
    let maxval = h.maxval as f64;
    Ok((h.width, h.height, raw.into_iter().map(|v| v as f64 / maxval).collect()))
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[[u8; 3]], comments: &[String]) -> Vec<u8> {
    let mut out = header_bytes("P6", width, height, 255, comments);
    for px in rgb {
        out.extend_from_slice(px);
    }
    out
}

/// Area-averaging resample that ignores invalid (zero) pixels.
pub fn downsample_depth(img: &DepthImage, width: usize, height: usize) -> DepthImage {
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let mut out = Vec::with_capacity(width * height);
    for oy in 0..height {
        let y0 = oy as f64 * sy;
        let y1 = y0 + sy;
        for ox in 0..width {
            let x0 = ox as f64 * sx;
            let x1 = x0 + sx;
            let mut wsum = 0.0;
            let mut acc = 0.0;
            let mut iy = y0.floor() as usize;
            while (iy as f64) < y1 && iy < img.height {
                let wy = (y1.min(iy as f64 + 1.0) - y0.max(iy as f64)).max(0.0);
                let mut ix = x0.floor() as usize;
                while (ix as f64) < x1 && ix < img.width {
                    let wx = (x1.min(ix as f64 + 1.0) - x0.max(ix as f64)).max(0.0);
                    let d = img.get(ix, iy);
                    if d > 0.0 {
                        acc += wx * wy * d;
                        wsum += wx * wy;
                    }
                    ix += 1;
                }
                iy += 1;
            }
            out.push(if wsum > 0.0 { acc / wsum } else { 0.0 });
        }
    }
    DepthImage {
        width,
        height,
        data: out,
    }
}

pub fn downsample_semantic(img: &SemanticImage, width: usize, height: usize) -> SemanticImage {
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let mut data = Vec::with_capacity(width * height);
    for oy in 0..height {
        let iy = (((oy as f64 + 0.5) * sy) as usize).min(img.height - 1);
        for ox in 0..width {
            let ix = (((ox as f64 + 0.5) * sx) as usize).min(img.width - 1);
            data.push(img.get(ix, iy));
        }
    }
    SemanticImage {
        width,
        height,
        data,
    }
}

fn needs_downsample(width: usize, height: usize) -> bool {
    width > WORKING_WIDTH || height > WORKING_HEIGHT
}

pub fn load_depth(path: impl AsRef<Path>) -> Result<DepthImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = parse_depth_pgm(&bytes)?;
    Ok(if needs_downsample(img.width, img.height) {
        downsample_depth(&img, WORKING_WIDTH, WORKING_HEIGHT)
    } else {
        img
    })
}

pub fn load_semantic(path: impl AsRef<Path>) -> Result<SemanticImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = parse_semantic_pgm(&bytes)?;
    Ok(if needs_downsample(img.width, img.height) {
        downsample_semantic(&img, WORKING_WIDTH, WORKING_HEIGHT)
    } else {
        img
    })
}
