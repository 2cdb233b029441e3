//! The four cue channels.
//!
//! | channel | property            | cue                      | range      |
//! |---------|---------------------|--------------------------|------------|
//! | M1      | 2D shape            | max. intensity gradients | `[0, pi]`  |
//! | M2      | 3D geometry         | max. normal vectors      | `[0, pi]^2`|
//! | M3      | transparency        | unavailable depth        | `{0, 1}`   |
//! | M4      | specular reflection | max. intensity           | `{0, 1}`   |
//!
//! M3 and M4 start out as binary masks; their features are the Sobel
//! orientations along the mask contours, the same operator M1 applies to color.
//! M3 also contributes normals of the depth map after scanline extrusion.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::frame::{luminance, CameraIntrinsics, RgbdFrame, UNAVAILABLE};

/// Gradient magnitude floor on the 8-bit Sobel scale.
pub const DEFAULT_TAU_MAG: f32 = 30.0;
/// Lowest luminance of the last five 8-bit bins (251..=255).
pub const DEFAULT_SPECULAR_THRESHOLD: u8 = 251;
pub const DEFAULT_PATCH_RADIUS: usize = 2;
/// Minimum valid samples for a plane fit.
pub const MIN_PATCH_SAMPLES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    M1,
    M2,
    M3,
    M4,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::M1, Channel::M2, Channel::M3, Channel::M4];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: u8) -> Option<Channel> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn physical_property(self) -> &'static str {
        match self {
            Channel::M1 => "2D shape",
            Channel::M2 => "3D geometry",
            Channel::M3 => "transparency",
            Channel::M4 => "specular reflection",
        }
    }

    pub fn cue(self) -> &'static str {
        match self {
            Channel::M1 => "max. intensity gradients",
            Channel::M2 => "max. normal vectors",
            Channel::M3 => "unavailable depth",
            Channel::M4 => "max. intensity",
        }
    }

    pub fn value_range(self) -> &'static str {
        match self {
            Channel::M1 => "[0,pi]",
            Channel::M2 => "[0,pi]^2",
            Channel::M3 | Channel::M4 => "{0,1}",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.index() + 1)
    }
}

/// A subset of the four channels, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ChannelSet(u8);

impl ChannelSet {
    pub const BASELINE: ChannelSet = ChannelSet(0b0011);
    pub const ALL: ChannelSet = ChannelSet(0b1111);

    pub fn new(channels: &[Channel]) -> Self {
        Self(channels.iter().fold(0, |m, c| m | 1 << c.index()))
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits & !0b1111 == 0).then_some(Self(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, c: Channel) -> bool {
        self.0 & (1 << c.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: ChannelSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Channel> {
        Channel::ALL.into_iter().filter(move |&c| self.contains(c))
    }

    /// Compact label such as `m1m2m4`.
    pub fn label(self) -> String {
        self.iter().map(|c| c.to_string()).collect()
    }

    /// The four combinations evaluated side by side.
    pub fn standard_sets() -> [ChannelSet; 4] {
        use Channel::*;
        [
            ChannelSet::new(&[M1, M2]),
            ChannelSet::new(&[M1, M2, M3]),
            ChannelSet::new(&[M1, M2, M4]),
            ChannelSet::ALL,
        ]
    }
}

impl fmt::Display for ChannelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.iter().map(|c| c.to_string()).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for ChannelSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut set = ChannelSet::default();
        for part in s.split(|c| c == ',' || c == '+').map(str::trim).filter(|p| !p.is_empty()) {
            let c = match part.to_ascii_lowercase().as_str() {
                "m1" => Channel::M1,
                "m2" => Channel::M2,
                "m3" => Channel::M3,
                "m4" => Channel::M4,
                "all" => {
                    set = ChannelSet::ALL;
                    continue;
                }
                other => return Err(Error::Config(format!("unknown channel `{other}`"))),
            };
            set.0 |= 1 << c.index();
        }
        if set.is_empty() {
            return Err(Error::Config(format!("empty channel list `{s}`")));
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..width * height).map(|i| f(i % width, i / width)).collect();
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the set pixels.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for (i, _) in self.data.iter().enumerate().filter(|(_, &b)| b) {
            let (x, y) = (i % self.width, i / self.width);
            bb = Some(match bb {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        bb
    }

    /// Chebyshev dilation by `radius` pixels.
    pub fn dilate(&self, radius: usize) -> BinaryMask {
        if radius == 0 {
            return self.clone();
        }
        let (w, h) = self.dims();
        let mut rows = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                if self.data[y * w + x] {
                    let (lo, hi) = (x.saturating_sub(radius), (x + radius).min(w - 1));
                    rows[y * w + lo..=y * w + hi].fill(true);
                }
            }
        }
        let mut out = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                if rows[y * w + x] {
                    let (lo, hi) = (y.saturating_sub(radius), (y + radius).min(h - 1));
                    for yy in lo..=hi {
                        out[yy * w + x] = true;
                    }
                }
            }
        }
        BinaryMask {
            width: w,
            height: h,
            data: out,
        }
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_dims(other)?;
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect(),
        })
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_dims(other)?;
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect(),
        })
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    fn check_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }
}

/// Undirected orientations in `[0, pi)` with magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationMap {
    pub width: usize,
    pub height: usize,
    pub orientation: Vec<f32>,
    pub magnitude: Vec<f32>,
    pub valid: Vec<bool>,
}

impl OrientationMap {
    fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            orientation: vec![0.0; n],
            magnitude: vec![0.0; n],
            valid: vec![false; n],
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Unit normals facing the camera (`nz <= 0`). `slope` is the fitted depth
/// gradient norm `|(dz/dx, dz/dy)|`, used to rank normal features.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub width: usize,
    pub height: usize,
    pub normals: Vec<[f64; 3]>,
    pub slope: Vec<f32>,
    pub valid: Vec<bool>,
}

impl NormalMap {
    fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            normals: vec![[0.0; 3]; n],
            slope: vec![0.0; n],
            valid: vec![false; n],
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// 3x3 Sobel over `channels` planes; per pixel keeps the plane with the
/// largest magnitude. The one-pixel image border is left invalid.
fn dominant_gradient(
    width: usize,
    height: usize,
    channels: usize,
    tau_mag: f32,
    value: impl Fn(usize, usize) -> i32,
) -> OrientationMap {
    let mut out = OrientationMap::empty(width, height);
    if width < 3 || height < 3 {
        return out;
    }
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            let mut best = (0i32, 0i32, 0i32);
            for c in 0..channels {
                let p = |xx: usize, yy: usize| value(yy * width + xx, c);
                let gx = (p(x + 1, y - 1) + 2 * p(x + 1, y) + p(x + 1, y + 1))
                    - (p(x - 1, y - 1) + 2 * p(x - 1, y) + p(x - 1, y + 1));
                let gy = (p(x - 1, y + 1) + 2 * p(x, y + 1) + p(x + 1, y + 1))
                    - (p(x - 1, y - 1) + 2 * p(x, y - 1) + p(x + 1, y - 1));
                let m2 = gx * gx + gy * gy;
                if m2 > best.2 {
                    best = (gx, gy, m2);
                }
            }
            let (gx, gy, m2) = best;
            if m2 == 0 {
                continue;
            }
            let i = y * width + x;
            let mag = (m2 as f32).sqrt();
            out.magnitude[i] = mag;
            let t = fold_orientation((gy as f64).atan2(gx as f64)) as f32;
            // f32 rounding may land on pi itself
            out.orientation[i] = if t >= std::f32::consts::PI { 0.0 } else { t };
            out.valid[i] = mag >= tau_mag;
        }
    }
    out
}

/// Folds a direction angle onto the undirected range `[0, pi)`.
pub fn fold_orientation(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(PI);
    if t >= PI {
        t = 0.0;
    }
    t
}

/// M1: per-channel color Sobel, strongest channel wins.
pub fn intensity_gradients(frame: &RgbdFrame, tau_mag: f32) -> Result<OrientationMap> {
    if frame.width < 3 || frame.height < 3 {
        return Err(Error::ImageTooSmall {
            width: frame.width,
            height: frame.height,
        });
    }
    let rgb = &frame.rgb;
    Ok(dominant_gradient(frame.width, frame.height, 3, tau_mag, |i, c| {
        i32::from(rgb[i][c])
    }))
}

/// M3/M4 contour cue: the M1 operator applied to a mask rendered as {0, 255}.
pub fn mask_contour_orientations(mask: &BinaryMask, tau_mag: f32) -> OrientationMap {
    let data = &mask.data;
    dominant_gradient(mask.width, mask.height, 1, tau_mag, |i, _| {
        if data[i] {
            255
        } else {
            0
        }
    })
}

/// M2: least-squares plane `z = a x + b y + c` over the back-projected patch
/// around each pixel with valid depth.
pub fn depth_normals(
    depth: &[u16],
    width: usize,
    height: usize,
    intrinsics: &CameraIntrinsics,
    patch_radius: usize,
) -> NormalMap {
    let mut out = NormalMap::empty(width, height);
    // Back-project once; (x, y, z) in meters, z == 0 marks unavailable.
    let points: Vec<[f64; 3]> = depth
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if d == UNAVAILABLE {
                return [0.0; 3];
            }
            let z = f64::from(d) / 1000.0;
            let (u, v) = ((i % width) as f64, (i / width) as f64);
            [
                (u - intrinsics.cx) * z / intrinsics.fx,
                (v - intrinsics.cy) * z / intrinsics.fy,
                z,
            ]
        })
        .collect();
    let r = patch_radius as isize;
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if depth[i] == UNAVAILABLE {
                continue;
            }
            let mut pts = [[0.0f64; 3]; 121];
            let mut n = 0;
            for dy in -r..=r {
                let yy = y as isize + dy;
                if yy < 0 || yy >= height as isize {
                    continue;
                }
                for dx in -r..=r {
                    let xx = x as isize + dx;
                    if xx < 0 || xx >= width as isize {
                        continue;
                    }
                    let p = points[yy as usize * width + xx as usize];
                    if p[2] > 0.0 && n < pts.len() {
                        pts[n] = p;
                        n += 1;
                    }
                }
            }
            if n < MIN_PATCH_SAMPLES {
                continue;
            }
            if let Some((a, b)) = fit_plane_slopes(&pts[..n]) {
                let norm = (a * a + b * b + 1.0).sqrt();
                out.normals[i] = [a / norm, b / norm, -1.0 / norm];
                out.slope[i] = (a * a + b * b).sqrt() as f32;
                out.valid[i] = true;
            }
        }
    }
    out
}

/// Slopes `(a, b)` of the least-squares plane `z = a x + b y + c`.
fn fit_plane_slopes(pts: &[[f64; 3]]) -> Option<(f64, f64)> {
    let n = pts.len() as f64;
    let mean = pts.iter().fold([0.0; 3], |m, p| [m[0] + p[0], m[1] + p[1], m[2] + p[2]]);
    let mean = mean.map(|s| s / n);
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy, dz) = (p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxz += dx * dz;
        syz += dy * dz;
    }
    let det = sxx * syy - sxy * sxy;
    if !(det > 1e-6 * (sxx * syy).max(f64::MIN_POSITIVE)) {
        return None;
    }
    let a = (sxz * syy - syz * sxy) / det;
    let b = (syz * sxx - sxz * sxy) / det;
    Some((a, b))
}

/// True exactly where depth is unavailable.
pub fn nan_mask(depth: &[u16], width: usize, height: usize) -> BinaryMask {
    BinaryMask {
        width,
        height,
        data: depth.iter().map(|&d| d == UNAVAILABLE).collect(),
    }
}

/// Normals of the scanline-filled depth, kept only where the original depth
/// was unavailable.
pub fn extruded_normals(
    depth_filled: &[u16],
    original_nan: &BinaryMask,
    intrinsics: &CameraIntrinsics,
    patch_radius: usize,
) -> NormalMap {
    let mut normals = depth_normals(
        depth_filled,
        original_nan.width,
        original_nan.height,
        intrinsics,
        patch_radius,
    );
    for (v, &inside) in normals.valid.iter_mut().zip(&original_nan.data) {
        *v &= inside;
    }
    normals
}

/// M4 stage 1: luminance at or above `threshold`.
pub fn specular_candidates(frame: &RgbdFrame, threshold: u8) -> BinaryMask {
    BinaryMask {
        width: frame.width,
        height: frame.height,
        data: frame.rgb.iter().map(|&p| luminance(p) >= threshold).collect(),
    }
}

/// M4 stage 2: keep highlight candidates only where depth is unavailable.
pub fn crossmodal_specular_filter(candidates: &BinaryMask, nan: &BinaryMask) -> Result<BinaryMask> {
    candidates.and(nan)
}
