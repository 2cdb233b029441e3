//! Registered RGB-D frames, pinhole camera geometry and the on-disk frame
//! directory format.
//!
//! Depth is stored as 16-bit millimeters; the value `0` marks a pixel the
//! sensor could not measure. Valid depths are always `>= 1`.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};

/// Depth value reserved for "no measurement".
pub const UNAVAILABLE: u16 = 0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self { fx, fy, cx, cy }
    }

    /// Checks the focal lengths and that the principal point lies inside an
    /// image of the given size.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < width as f64
            && self.cy >= 0.0
            && self.cy < height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::Format(format!(
                "intrinsics {self:?} invalid for {width}x{height}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// A registered color + depth image pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdFrame {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[u8; 3]>,
    /// Millimeters, [`UNAVAILABLE`] where the sensor returned nothing.
    pub depth: Vec<u16>,
    pub frame_id: u64,
    pub intrinsics: CameraIntrinsics,
}

impl RgbdFrame {
    pub fn new(
        width: usize,
        height: usize,
        rgb: Vec<[u8; 3]>,
        depth: Vec<u16>,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self> {
        if rgb.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (rgb.len(), 1),
            });
        }
        if depth.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (depth.len(), 1),
            });
        }
        Ok(Self {
            width,
            height,
            rgb,
            depth,
            frame_id: 0,
            intrinsics,
        })
    }

    /// A frame filled with one color and one depth value.
    pub fn filled(
        width: usize,
        height: usize,
        color: [u8; 3],
        depth_mm: u16,
        intrinsics: CameraIntrinsics,
    ) -> Self {
        Self {
            width,
            height,
            rgb: vec![color; width * height],
            depth: vec![depth_mm; width * height],
            frame_id: 0,
            intrinsics,
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn is_depth_available(&self, x: usize, y: usize) -> bool {
        self.depth[self.index(x, y)] != UNAVAILABLE
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn luminance_map(&self) -> LuminanceMap {
        LuminanceMap {
            width: self.width,
            height: self.height,
            data: self.rgb.iter().map(|&p| luminance(p)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LuminanceMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

/// BT.601 luma, rounded half up.
#[inline]
pub fn luminance(rgb: [u8; 3]) -> u8 {
    let [r, g, b] = rgb.map(u32::from);
    // Integer form of round(0.299 R + 0.587 G + 0.114 B); max is exactly 255.
    ((299 * r + 587 * g + 114 * b + 500) / 1000) as u8
}

/// Pinhole back-projection of a pixel with known depth into the camera frame.
pub fn backproject(u: f64, v: f64, depth_mm: u16, intrinsics: &CameraIntrinsics) -> Result<Point3> {
    if depth_mm == UNAVAILABLE {
        return Err(Error::UnavailableDepth { u, v });
    }
    let z = f64::from(depth_mm) / 1000.0;
    Ok(Point3::new(
        (u - intrinsics.cx) * z / intrinsics.fx,
        (v - intrinsics.cy) * z / intrinsics.fy,
        z,
    ))
}

/// Projects a camera-frame point to continuous pixel coordinates.
pub fn project(p: &Point3, intrinsics: &CameraIntrinsics) -> (f64, f64) {
    (
        intrinsics.fx * p.x / p.z + intrinsics.cx,
        intrinsics.fy * p.y / p.z + intrinsics.cy,
    )
}

const RGB_FILE: &str = "rgb.png";
const DEPTH_FILE: &str = "depth.png";
const META_FILE: &str = "meta.txt";

/// Reads `rgb.png`, `depth.png` and `meta.txt` from a frame directory.
pub fn load_frame(dir: impl AsRef<Path>) -> Result<RgbdFrame> {
    let dir = dir.as_ref();
    let rgb_path = dir.join(RGB_FILE);
    let depth_path = dir.join(DEPTH_FILE);
    let meta_path = dir.join(META_FILE);

    let rgb = match open_image(&rgb_path)? {
        DynamicImage::ImageRgb8(img) => img,
        other => {
            return Err(Error::Format(format!(
                "{} must be 8-bit RGB, found {:?}",
                rgb_path.display(),
                other.color()
            )))
        }
    };
    let depth = match open_image(&depth_path)? {
        DynamicImage::ImageLuma16(img) => img,
        other => {
            return Err(Error::Format(format!(
                "{} must be 16-bit grayscale, found {:?}",
                depth_path.display(),
                other.color()
            )))
        }
    };
    if rgb.dimensions() != depth.dimensions() {
        let (rw, rh) = rgb.dimensions();
        let (dw, dh) = depth.dimensions();
        return Err(Error::DimensionMismatch {
            expected: (rw as usize, rh as usize),
            actual: (dw as usize, dh as usize),
        });
    }
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta = parse_key_values(&text);
    let get = |key: &str| -> Result<f64> {
        meta.iter()
            .find(|(k, _)| k == key)
            .ok_or_else(|| Error::Format(format!("{} lacks `{key}`", meta_path.display())))?
            .1
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("{key}: {e}")))
    };
    let intrinsics = CameraIntrinsics::new(get("fx")?, get("fy")?, get("cx")?, get("cy")?);

    let (w, h) = rgb.dimensions();
    let (width, height) = (w as usize, h as usize);
    intrinsics.validate(width, height)?;
    let rgb = rgb.pixels().map(|p| p.0).collect();
    let depth = depth.pixels().map(|p| p.0[0]).collect();
    let mut frame = RgbdFrame::new(width, height, rgb, depth, intrinsics)?;
    // Optional; older directories lack it.
    if let Some((_, v)) = meta.iter().find(|(k, _)| k == "frame_id") {
        frame.frame_id = v
            .parse()
            .map_err(|e| Error::Format(format!("frame_id: {e}")))?;
    }
    Ok(frame)
}

/// Writes a frame directory readable by [`load_frame`]; extra `key=value`
/// lines are appended to `meta.txt`.
pub fn save_frame(frame: &RgbdFrame, dir: impl AsRef<Path>, extra_meta: &[(&str, String)]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (w, h) = (frame.width as u32, frame.height as u32);

    let rgb: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(w, h, frame.rgb.iter().flatten().copied().collect())
            .ok_or_else(|| Error::Format("rgb buffer size".into()))?;
    let rgb_path = dir.join(RGB_FILE);
    rgb.save(&rgb_path).map_err(|source| Error::Image {
        path: rgb_path.clone(),
        source,
    })?;

    let depth: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(w, h, frame.depth.clone())
        .ok_or_else(|| Error::Format("depth buffer size".into()))?;
    let depth_path = dir.join(DEPTH_FILE);
    depth.save(&depth_path).map_err(|source| Error::Image {
        path: depth_path.clone(),
        source,
    })?;

    let k = &frame.intrinsics;
    let mut meta = format!(
        "fx={}\nfy={}\ncx={}\ncy={}\nframe_id={}\n",
        k.fx, k.fy, k.cx, k.cy, frame.frame_id
    );
    for (key, value) in extra_meta {
        meta.push_str(&format!("{key}={value}\n"));
    }
    let meta_path = dir.join(META_FILE);
    fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Splits `key=value` lines (also accepts `key = value`); `#` starts a comment.
pub fn parse_key_values(text: &str) -> Vec<(String, String)> {
    text.lines()
        .map(|line| line.split('#').next().unwrap_or("").trim())
        .filter(|line| !line.is_empty())
        .filter_map(|line| {
            let (k, v) = line.split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}
