use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Working image size used throughout the pipeline.
pub const WORKING_WIDTH: usize = 320;
pub const WORKING_HEIGHT: usize = 224;

/// Rigid mount of the camera on the robot body.
///
/// Camera-frame points use the optical convention (x right, y down, z
/// forward). They are first mapped onto body axes (x forward, y left, z up)
/// by a fixed axis permutation, then rotated by `rotation` and shifted by
/// `translation`. Identity extrinsics therefore describe a level camera at
/// the body origin looking along body +x.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Extrinsics {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Camera at `height` above the body origin, pitched down by `pitch` rad.
    pub fn mounted(height: f64, pitch: f64) -> Self {
        let (s, c) = pitch.sin_cos();
        Self {
            rotation: [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
            translation: [0.0, 0.0, height],
        }
    }

    fn is_rotation(&self) -> bool {
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-6 {
                    return false;
                }
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        (det - 1.0).abs() < 1e-6
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Radians.
    pub horizontal_fov: f64,
    /// Meters.
    pub max_range: f64,
    pub extrinsics: Extrinsics,
}

fn optical_to_body_axes(p: [f64; 3]) -> [f64; 3] {
    [p[2], -p[0], -p[1]]
}

fn body_axes_to_optical(p: [f64; 3]) -> [f64; 3] {
    [-p[1], -p[2], p[0]]
}

impl CameraModel {
    /// RealSense-like defaults at the 224x320 working resolution: 86 degree
    /// horizontal field of view, 10 m range, mounted 1 m high and pitched
    /// 20 degrees down.
    pub fn default_wheelchair() -> Self {
        let hfov = 86f64.to_radians();
        let f = (WORKING_WIDTH as f64 / 2.0) / (hfov / 2.0).tan();
        Self {
            fx: f,
            fy: f,
            cx: WORKING_WIDTH as f64 / 2.0,
            cy: WORKING_HEIGHT as f64 / 2.0,
            width: WORKING_WIDTH,
            height: WORKING_HEIGHT,
            horizontal_fov: hfov,
            max_range: 10.0,
            extrinsics: Extrinsics::mounted(1.0, 20f64.to_radians()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64
            && self.horizontal_fov > 0.0
            && self.horizontal_fov < std::f64::consts::PI
            && self.max_range > 0.0
            && self.width > 0
            && self.height > 0;
        if !ok {
            return Err(Error::contract(format!("invalid camera model: {self:?}")));
        }
        if !self.extrinsics.is_rotation() {
            return Err(Error::contract("extrinsic rotation is not orthonormal"));
        }
        Ok(())
    }

    /// Same optics re-expressed for an image resampled to `width` x `height`.
    pub fn scaled_to(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            ..*self
        }
    }

    pub fn camera_to_body(&self, p: [f64; 3]) -> [f64; 3] {
        let q = optical_to_body_axes(p);
        let r = &self.extrinsics.rotation;
        let t = &self.extrinsics.translation;
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = r[i][0] * q[0] + r[i][1] * q[1] + r[i][2] * q[2] + t[i];
        }
        out
    }

    pub fn body_to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.extrinsics.rotation;
        let t = &self.extrinsics.translation;
        let d = [p[0] - t[0], p[1] - t[1], p[2] - t[2]];
        let mut q = [0.0; 3];
        for i in 0..3 {
            q[i] = r[0][i] * d[0] + r[1][i] * d[1] + r[2][i] * d[2];
        }
        body_axes_to_optical(q)
    }

    /// Rotates a camera-frame direction into body axes (no translation).
    pub fn direction_to_body(&self, d: [f64; 3]) -> [f64; 3] {
        let q = optical_to_body_axes(d);
        let r = &self.extrinsics.rotation;
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = r[i][0] * q[0] + r[i][1] * q[1] + r[i][2] * q[2];
        }
        out
    }

    /// Pinhole projection of a camera-frame point; `None` behind the camera.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        if p[2] <= 1e-9 {
            return None;
        }
        Some((
            self.fx * p[0] / p[2] + self.cx,
            self.fy * p[1] / p[2] + self.cy,
        ))
    }

    pub fn backproject_pixel(&self, u: f64, v: f64, depth: f64) -> [f64; 3] {
        [
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        ]
    }

    /// Flat `key=value` configuration text.
    pub fn parse_config(text: &str) -> Result<Self> {
        let mut fx = None;
        let mut fy = None;
        let mut cx = None;
        let mut cy = None;
        let mut width = None;
        let mut height = None;
        let mut hfov = None;
        let mut range = None;
        let mut rotation = None;
        let mut translation = None;

        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let line_offset = offset;
            offset += line.len();
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| Error::parse(line_offset, "expected key=value"))?;
            let key = key.trim();
            let nums = parse_numbers(value, line_offset)?;
            let scalar = |n: &[f64]| -> Result<f64> {
                if n.len() == 1 {
                    Ok(n[0])
                } else {
                    Err(Error::parse(line_offset, format!("{key} expects one value")))
                }
            };
            match key {
                "fx" => fx = Some(scalar(&nums)?),
                "fy" => fy = Some(scalar(&nums)?),
                "cx" => cx = Some(scalar(&nums)?),
                "cy" => cy = Some(scalar(&nums)?),
                "width" => width = Some(scalar(&nums)?),
                "height" => height = Some(scalar(&nums)?),
                "hfov_deg" => hfov = Some(scalar(&nums)?.to_radians()),
                "max_range_m" => range = Some(scalar(&nums)?),
                "extrinsic_rotation" => {
                    if nums.len() != 9 {
                        return Err(Error::parse(line_offset, "extrinsic_rotation expects 9 values"));
                    }
                    rotation = Some([
                        [nums[0], nums[1], nums[2]],
                        [nums[3], nums[4], nums[5]],
                        [nums[6], nums[7], nums[8]],
                    ]);
                }
                "extrinsic_translation" => {
                    if nums.len() != 3 {
                        return Err(Error::parse(
                            line_offset,
                            "extrinsic_translation expects 3 values",
                        ));
                    }
                    translation = Some([nums[0], nums[1], nums[2]]);
                }
                other => {
                    return Err(Error::parse(line_offset, format!("unknown key `{other}`")));
                }
            }
        }
        let end = text.len();
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::parse(end, format!("missing key `{name}`")))
        };
        let as_size = |v: f64, name: &str| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::parse(end, format!("{name} must be a positive integer")))
            }
        };
        let cam = CameraModel {
            fx: need(fx, "fx")?,
            fy: need(fy, "fy")?,
            cx: need(cx, "cx")?,
            cy: need(cy, "cy")?,
            width: as_size(need(width, "width")?, "width")?,
            height: as_size(need(height, "height")?, "height")?,
            horizontal_fov: need(hfov, "hfov_deg")?,
            max_range: need(range, "max_range_m")?,
            extrinsics: Extrinsics {
                rotation: rotation.unwrap_or(Extrinsics::identity().rotation),
                translation: translation.unwrap_or([0.0; 3]),
            },
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn to_config(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "fx={}", self.fx);
        let _ = writeln!(s, "fy={}", self.fy);
        let _ = writeln!(s, "cx={}", self.cx);
        let _ = writeln!(s, "cy={}", self.cy);
        let _ = writeln!(s, "width={}", self.width);
        let _ = writeln!(s, "height={}", self.height);
        let _ = writeln!(s, "hfov_deg={}", self.horizontal_fov.to_degrees());
        let _ = writeln!(s, "max_range_m={}", self.max_range);
        let r = &self.extrinsics.rotation;
        let _ = writeln!(
            s,
            "extrinsic_rotation={},{},{},{},{},{},{},{},{}",
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]
        );
        let t = &self.extrinsics.translation;
        let _ = writeln!(s, "extrinsic_translation={},{},{}", t[0], t[1], t[2]);
        s
    }
}

fn parse_numbers(value: &str, offset: usize) -> Result<Vec<f64>> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(offset, format!("bad number `{t}`")))
        })
        .collect()
}

pub fn load_camera(path: impl AsRef<Path>) -> Result<CameraModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CameraModel::parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_extrinsics_map_optical_axis_to_body_forward() {
        let cam = CameraModel {
            extrinsics: Extrinsics::identity(),
            ..CameraModel::default_wheelchair()
        };
        let b = cam.camera_to_body([1.0, 0.0, 2.0]);
        assert_eq!(b, [2.0, -1.0, 0.0]);
        let back = cam.body_to_camera(b);
        assert_eq!(back, [1.0, 0.0, 2.0]);
    }

    #[test]
    fn config_roundtrip() {
        let cam = CameraModel::default_wheelchair();
        let parsed = CameraModel::parse_config(&cam.to_config()).unwrap();
        assert_eq!(parsed.width, cam.width);
        assert!((parsed.fx - cam.fx).abs() < 1e-9);
        assert!((parsed.horizontal_fov - cam.horizontal_fov).abs() < 1e-12);
        assert_eq!(parsed.extrinsics.translation, cam.extrinsics.translation);
    }

    #[test]
    fn config_errors_carry_offsets() {
        let err = CameraModel::parse_config("fx=100\nfy=abc\n").unwrap_err();
        match err {
            Error::Parse { offset, .. } => assert_eq!(offset, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_rotation_extrinsics_rejected() {
        let mut cam = CameraModel::default_wheelchair();
        cam.extrinsics.rotation[0][0] = 2.0;
        assert!(cam.validate().is_err());
    }
}
