//! Seeded synthetic tabletop scenes with exact ground truth.
//!
//! A pinhole camera is mounted above a horizontal table, pitched down, facing
//! a wall behind the table. Objects stand upright on the table and are ray
//! cast per pixel; along each ray the hits are composited far to near.
//! Diffuse surfaces are textured and shaded and have valid depth. Transparent
//! surfaces attenuate whatever lies behind them, carry a faint dark rim and
//! a few saturated highlight blobs, and return no depth. Composite objects
//! are transparent apart from a diffuse label band.
//!
//! World coordinates are `X` right, `Y` up from the table and `Z` forward
//! along the table, with the camera at `(0, mount_height, 0)`.

use std::f64::consts::{PI, TAU};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::frame::{parse_key_values, save_frame, CameraIntrinsics, Point3, RgbdFrame, UNAVAILABLE};
use crate::modalities::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    Diffuse,
    Transparent,
    Composite,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Diffuse => "diffuse",
            Category::Transparent => "transparent",
            Category::Composite => "composite",
        })
    }
}

impl FromStr for Category {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffuse" => Ok(Category::Diffuse),
            "transparent" => Ok(Category::Transparent),
            "composite" => Ok(Category::Composite),
            _ => Err(Error::Spec(format!("unknown category `{s}`"))),
        }
    }
}

/// Upright primitives standing on the table. Dimensions in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Box { width: f64, depth: f64, height: f64 },
    Cylinder { radius: f64, height: f64 },
    /// Truncated cone, radius varying linearly from bottom to top.
    Glass { bottom_radius: f64, top_radius: f64, height: f64 },
}

impl Shape {
    pub fn height(&self) -> f64 {
        match *self {
            Shape::Box { height, .. } | Shape::Cylinder { height, .. } | Shape::Glass { height, .. } => height,
        }
    }

    pub fn is_round(&self) -> bool {
        !matches!(self, Shape::Box { .. })
    }

    /// Height of the volume centroid above the table.
    pub fn centroid_height(&self) -> f64 {
        match *self {
            Shape::Box { height, .. } | Shape::Cylinder { height, .. } => height / 2.0,
            Shape::Glass {
                bottom_radius: a,
                top_radius: b,
                height,
            } => height * (a * a + 2.0 * a * b + 3.0 * b * b) / (4.0 * (a * a + a * b + b * b)),
        }
    }

    fn radius_at(&self, y: f64) -> f64 {
        match *self {
            Shape::Box { width, depth, .. } => 0.5 * width.max(depth),
            Shape::Cylinder { radius, .. } => radius,
            Shape::Glass {
                bottom_radius,
                top_radius,
                height,
            } => bottom_radius + (top_radius - bottom_radius) * (y / height).clamp(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub id: String,
    pub category: Category,
    pub shape: Shape,
    /// Lateral table position (m).
    pub x: f64,
    /// Forward table position (m).
    pub z: f64,
    /// Rotation about the vertical axis (rad).
    pub rotation: f64,
    pub texture_seed: u64,
    /// Label band of composite objects, as fractions of the height.
    pub band: (f64, f64),
    /// Number of highlight blobs on transparent parts (1..=3).
    pub highlights: u8,
    /// Saturated white top face on diffuse objects.
    pub white_cap: bool,
}

impl ObjectSpec {
    pub fn new(id: &str, category: Category, shape: Shape, x: f64, z: f64) -> Self {
        Self {
            id: id.to_string(),
            category,
            shape,
            x,
            z,
            rotation: 0.0,
            texture_seed: 1,
            band: (0.55, 0.8),
            highlights: 2,
            white_cap: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraSpec {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Height of the optical center above the table (m).
    pub mount_height: f64,
    /// Downward pitch of the optical axis (degrees).
    pub pitch_deg: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            fx: 300.0,
            fy: 300.0,
            cx: 160.0,
            cy: 120.0,
            mount_height: 0.5,
            pitch_deg: 40.0,
        }
    }
}

impl CameraSpec {
    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy)
    }

    fn basis(&self) -> ([f64; 3], [f64; 3]) {
        let a = self.pitch_deg.to_radians();
        // image-down and forward axes in world coordinates
        ([0.0, -a.cos(), -a.sin()], [0.0, -a.sin(), a.cos()])
    }

    /// World point to camera coordinates (x right, y down, z along the axis).
    pub fn world_to_camera(&self, p: [f64; 3]) -> Point3 {
        let (down, fwd) = self.basis();
        let d = [p[0], p[1] - self.mount_height, p[2]];
        Point3::new(d[0], dot(d, down), dot(d, fwd))
    }

    /// World direction of the ray through pixel `(u, v)`, scaled so that the
    /// ray parameter equals camera depth.
    fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        let (down, fwd) = self.basis();
        let (rx, ry) = ((u - self.cx) / self.fx, (v - self.cy) / self.fy);
        [rx + ry * down[0] + fwd[0], ry * down[1] + fwd[1], ry * down[2] + fwd[2]]
    }

    fn origin(&self) -> [f64; 3] {
        [0.0, self.mount_height, 0.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableSpec {
    /// Forward distance of the wall standing behind the table (m).
    pub wall_distance: f64,
    pub texture_seed: u64,
    /// Peak-to-peak amplitude of the smooth background texture (8-bit levels).
    pub texture_contrast: f64,
    pub table_color: [f64; 3],
    pub wall_color: [f64; 3],
    /// Grid pitch of the printed pattern on table and wall (m).
    pub print_cell: f64,
    /// Fraction of grid cells carrying a printed rectangle.
    pub print_fill: f64,
    /// Level offset of printed rectangles (8-bit levels).
    pub print_contrast: f64,
    /// Radius of a printed disc centered under the first object that turns
    /// with it, like a rotating platform (m). Zero disables it.
    pub turntable_radius: f64,
    /// Grid pitch of the turntable print (m).
    pub turntable_cell: f64,
}

impl Default for TableSpec {
    fn default() -> Self {
        Self {
            wall_distance: 1.2,
            texture_seed: 11,
            texture_contrast: 24.0,
            table_color: [150.0, 125.0, 100.0],
            wall_color: [185.0, 188.0, 195.0],
            print_cell: 0.04,
            print_fill: 0.08,
            print_contrast: 28.0,
            turntable_radius: 0.0,
            turntable_cell: 0.012,
        }
    }
}

/// A point light near the sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightSpec {
    /// Offset from the camera center in world axes (m).
    pub offset: [f64; 3],
    /// Global brightness factor.
    pub intensity: f64,
}

impl Default for LightSpec {
    fn default() -> Self {
        Self {
            offset: [0.08, 0.05, 0.0],
            intensity: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Per-frame Gaussian color noise (8-bit levels).
    pub rgb_sigma: f64,
    /// Per-frame probability that an edge-band pixel loses its depth.
    pub flicker_rate: f64,
    /// Half-width of the band around depth discontinuities (px).
    pub edge_band: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            rgb_sigma: 4.0,
            flicker_rate: 0.5,
            edge_band: 2,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            rgb_sigma: 0.0,
            flicker_rate: 0.0,
            edge_band: 0,
        }
    }
}

/// Transparent-surface appearance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlassLook {
    pub attenuation: f64,
    pub offset: f64,
    /// Darkening of the one-pixel silhouette rim (8-bit levels).
    pub rim_contrast: f64,
}

impl Default for GlassLook {
    fn default() -> Self {
        Self {
            attenuation: 0.97,
            offset: 3.0,
            rim_contrast: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub camera: CameraSpec,
    pub table: TableSpec,
    pub light: LightSpec,
    pub noise: NoiseSpec,
    pub glass: GlassLook,
    pub objects: Vec<ObjectSpec>,
    pub seed: u64,
    pub frames: usize,
    /// Largest allowed bounding-box overlap between two objects, relative
    /// to the smaller box.
    pub occlusion_limit: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            camera: CameraSpec::default(),
            table: TableSpec::default(),
            light: LightSpec::default(),
            noise: NoiseSpec::default(),
            glass: GlassLook::default(),
            objects: Vec::new(),
            seed: 0,
            frames: 10,
            occlusion_limit: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTruth {
    pub object_id: String,
    pub category: Category,
    /// Pixels where the object is the frontmost surface.
    pub silhouette: BinaryMask,
    /// Pixels rendered without depth because of this object.
    pub transparency: BinaryMask,
    pub highlights: BinaryMask,
    /// Volume centroid in camera coordinates (m).
    pub centroid: Point3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub objects: Vec<ObjectTruth>,
    /// Pixels whose depth may flicker.
    pub edge_band: BinaryMask,
}

/// Noise-free rendering before frames are sampled.
#[derive(Debug, Clone)]
pub struct CleanRender {
    pub width: usize,
    pub height: usize,
    pub intrinsics: CameraIntrinsics,
    /// Unclamped color; highlights exceed 255.
    pub rgb: Vec<[f32; 3]>,
    pub depth: Vec<u16>,
    pub truth: GroundTruth,
}

#[inline]
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derived seed for the `k`-th member of a family.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    splitmix(seed ^ splitmix(k.wrapping_add(0x5eed)))
}

fn lattice(seed: u64, i: i64, j: i64) -> f64 {
    let h = splitmix(seed ^ splitmix((i as u64).wrapping_mul(0x1f1f_1f1f) ^ (j as u64).wrapping_shl(32)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Smooth value noise in `[0, 1)` with unit lattice spacing.
fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
    let (i, j) = (x0 as i64, y0 as i64);
    let a = lattice(seed, i, j);
    let b = lattice(seed, i + 1, j);
    let c = lattice(seed, i, j + 1);
    let d = lattice(seed, i + 1, j + 1);
    let top = a + (b - a) * sx;
    let bottom = c + (d - c) * sx;
    top + (bottom - top) * sy
}

/// Procedural label art: a base color under rotated rectangles and ellipses,
/// in surface coordinates `(s, t)` (meters along the surface).
#[derive(Debug, Clone)]
struct Texture {
    base: [f64; 3],
    patches: Vec<Patch>,
    period: f64,
}

#[derive(Debug, Clone)]
struct Patch {
    center: [f64; 2],
    half: [f64; 2],
    /// Rotation as (cos, sin).
    axis: [f64; 2],
    round: bool,
    color: [f64; 3],
}

impl Patch {
    fn contains(&self, ds: f64, dt: f64) -> bool {
        let u = (self.axis[0] * ds + self.axis[1] * dt) / self.half[0];
        let v = (-self.axis[1] * ds + self.axis[0] * dt) / self.half[1];
        if self.round {
            u * u + v * v <= 1.0
        } else {
            u.abs() <= 1.0 && v.abs() <= 1.0
        }
    }
}

impl Texture {
    fn new(seed: u64, period: f64, height: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 77));
        let color = |rng: &mut ChaCha8Rng| {
            let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(25.0..235.0));
            c
        };
        let base = color(&mut rng);
        let n = rng.random_range(6..10);
        let patches = (0..n)
            .map(|_| {
                let a: f64 = rng.random_range(0.0..PI);
                Patch {
                    center: [rng.random_range(0.0..period), rng.random_range(0.0..height)],
                    half: [rng.random_range(0.008..0.022), rng.random_range(0.005f64..0.016).min(height * 0.2)],
                    axis: [a.cos(), a.sin()],
                    round: rng.random_bool(0.5),
                    color: color(&mut rng),
                }
            })
            .collect();
        Self { base, patches, period }
    }

    fn sample(&self, s: f64, t: f64) -> [f64; 3] {
        let mut c = self.base;
        for p in &self.patches {
            let ds = (s - p.center[0] + self.period / 2.0).rem_euclid(self.period) - self.period / 2.0;
            if p.contains(ds, t - p.center[1]) {
                c = p.color;
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    t: f64,
    /// Local surface point and outward normal, object frame.
    local: [f64; 3],
    normal: [f64; 3],
    top: bool,
}

/// Nearest forward hit of a ray (object frame) with the shape.
fn intersect(shape: &Shape, o: [f64; 3], d: [f64; 3]) -> Option<Hit> {
    let eps = 1e-9;
    match *shape {
        Shape::Box { width, depth, height } => {
            let lo = [-width / 2.0, 0.0, -depth / 2.0];
            let hi = [width / 2.0, height, depth / 2.0];
            let (mut tmin, mut tmax) = (f64::NEG_INFINITY, f64::INFINITY);
            let mut axis = 0;
            let mut sign = 0.0;
            for k in 0..3 {
                if d[k].abs() < eps {
                    if o[k] < lo[k] || o[k] > hi[k] {
                        return None;
                    }
                    continue;
                }
                let (mut t0, mut t1) = ((lo[k] - o[k]) / d[k], (hi[k] - o[k]) / d[k]);
                let mut s = -1.0;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                    s = 1.0;
                }
                if t0 > tmin {
                    tmin = t0;
                    axis = k;
                    sign = s;
                }
                tmax = tmax.min(t1);
            }
            if tmin > tmax || tmin <= eps {
                return None;
            }
            let local = [o[0] + tmin * d[0], o[1] + tmin * d[1], o[2] + tmin * d[2]];
            let mut normal = [0.0; 3];
            normal[axis] = sign;
            Some(Hit {
                t: tmin,
                local,
                normal,
                top: axis == 1 && sign > 0.0,
            })
        }
        Shape::Cylinder { radius, height } => intersect_cone(o, d, radius, 0.0, height),
        Shape::Glass {
            bottom_radius,
            top_radius,
            height,
        } => intersect_cone(o, d, bottom_radius, (top_radius - bottom_radius) / height, height),
    }
}

/// Surface `x^2 + z^2 = (r0 + k y)^2`, `0 <= y <= h`, closed by a top disk.
fn intersect_cone(o: [f64; 3], d: [f64; 3], r0: f64, k: f64, h: f64) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    let mut consider = |hit: Hit| {
        if hit.t > 1e-9 && best.is_none_or(|b| hit.t < b.t) {
            best = Some(hit);
        }
    };
    let ry = r0 + k * o[1];
    let a = d[0] * d[0] + d[2] * d[2] - k * k * d[1] * d[1];
    let b = 2.0 * (o[0] * d[0] + o[2] * d[2] - k * ry * d[1]);
    let c = o[0] * o[0] + o[2] * o[2] - ry * ry;
    let disc = b * b - 4.0 * a * c;
    if a.abs() > 1e-12 && disc >= 0.0 {
        let sq = disc.sqrt();
        for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
            let p = [o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]];
            if (0.0..=h).contains(&p[1]) {
                let n = normalize([p[0], -k * (r0 + k * p[1]), p[2]]);
                consider(Hit {
                    t,
                    local: p,
                    normal: n,
                    top: false,
                });
            }
        }
    }
    if d[1].abs() > 1e-12 {
        let t = (h - o[1]) / d[1];
        let p = [o[0] + t * d[0], h, o[2] + t * d[2]];
        let r = r0 + k * h;
        if p[0] * p[0] + p[2] * p[2] <= r * r {
            consider(Hit {
                t,
                local: p,
                normal: [0.0, 1.0, 0.0],
                top: true,
            });
        }
    }
    best
}

struct Placed<'a> {
    spec: &'a ObjectSpec,
    cos: f64,
    sin: f64,
    texture: Texture,
    /// Highlight centers as (world azimuth, height).
    blobs: Vec<(f64, f64)>,
}

impl Placed<'_> {
    fn to_local(&self, p: [f64; 3]) -> [f64; 3] {
        let (dx, dz) = (p[0] - self.spec.x, p[2] - self.spec.z);
        [self.cos * dx + self.sin * dz, p[1], -self.sin * dx + self.cos * dz]
    }

    fn dir_to_local(&self, d: [f64; 3]) -> [f64; 3] {
        [self.cos * d[0] + self.sin * d[2], d[1], -self.sin * d[0] + self.cos * d[2]]
    }

    fn normal_to_world(&self, n: [f64; 3]) -> [f64; 3] {
        [self.cos * n[0] - self.sin * n[2], n[1], self.sin * n[0] + self.cos * n[2]]
    }

    /// Surface coordinates for texturing, rotating with the object.
    fn surface_coords(&self, hit: &Hit) -> (f64, f64) {
        let p = hit.local;
        match self.spec.shape {
            Shape::Box { width, depth, .. } => {
                let n = hit.normal;
                let s = if n[0].abs() > 0.5 {
                    p[2] + if n[0] > 0.0 { 0.0 } else { 2.0 * width + depth }
                } else {
                    p[0] + if n[2] > 0.0 { width + depth } else { depth * 4.0 }
                };
                (s, p[1])
            }
            _ => {
                let phi = p[2].atan2(p[0]);
                (phi * self.spec.shape.radius_at(p[1]), p[1])
            }
        }
    }

    fn in_band(&self, y: f64) -> bool {
        let h = self.spec.shape.height();
        self.spec.category == Category::Composite && y >= self.spec.band.0 * h && y <= self.spec.band.1 * h
    }

    fn is_transparent_at(&self, hit: &Hit) -> bool {
        match self.spec.category {
            Category::Diffuse => false,
            Category::Transparent => true,
            Category::Composite => hit.top || !self.in_band(hit.local[1]),
        }
    }
}

const BLOB_HALF_ARC: f64 = 0.003;
const BLOB_HALF_HEIGHT: f64 = 0.005;
const BLOB_HEIGHTS: [f64; 3] = [0.82, 0.4, 0.62];
const HIGHLIGHT_LEVEL: f32 = 290.0;

fn place<'a>(spec: &'a SceneSpec, obj: &'a ObjectSpec) -> Placed<'a> {
    let h = obj.shape.height();
    let period = match obj.shape {
        Shape::Box { width, depth, .. } => 2.0 * (width + depth) + 4.0 * depth,
        _ => TAU * obj.shape.radius_at(h / 2.0),
    };
    let cam = spec.camera.origin();
    let light = [
        cam[0] + spec.light.offset[0],
        cam[1] + spec.light.offset[1],
        cam[2] + spec.light.offset[2],
    ];
    let blobs = if obj.category == Category::Diffuse || !obj.shape.is_round() {
        Vec::new()
    } else {
        BLOB_HEIGHTS
            .iter()
            .take(obj.highlights.clamp(1, 3) as usize)
            .map(|&f| {
                // the horizontal normal that halves the light and view directions
                let y = f * h;
                let horiz = |p: [f64; 3]| normalize([p[0] - obj.x, 0.0, p[2] - obj.z]);
                let (l, v) = (horiz(light), horiz(cam));
                let hv = [l[0] + v[0], 0.0, l[2] + v[2]];
                (hv[2].atan2(hv[0]), y)
            })
            .filter(|&(_, y)| obj.category != Category::Composite || {
                let (b0, b1) = obj.band;
                let m = BLOB_HALF_HEIGHT;
                y + m < b0 * h || y - m > b1 * h
            })
            .collect()
    };
    Placed {
        spec: obj,
        cos: obj.rotation.cos(),
        sin: obj.rotation.sin(),
        texture: Texture::new(obj.texture_seed, period, h),
        blobs,
    }
}

fn background(spec: &SceneSpec, o: [f64; 3], d: [f64; 3]) -> ([f64; 3], f64) {
    let tb = &spec.table;
    let seed = tb.texture_seed;
    let amp = tb.texture_contrast;
    let t_table = if d[1] < -1e-12 { -o[1] / d[1] } else { f64::INFINITY };
    let z_at_table = o[2] + t_table * d[2];
    if t_table.is_finite() && z_at_table < tb.wall_distance {
        let (x, z) = (o[0] + t_table * d[0], z_at_table);
        let n = value_noise(seed, x * 12.0, z * 12.0) + 0.5 * value_noise(seed ^ 1, x * 30.0, z * 30.0);
        let shade = amp * (n / 1.5 - 0.5) + turntable(spec, x, z).unwrap_or_else(|| print(tb, seed ^ 4, x, z));
        (tb.table_color.map(|c| c + shade), t_table)
    } else {
        let t = (tb.wall_distance - o[2]) / d[2];
        let (x, y) = (o[0] + t * d[0], o[1] + t * d[1]);
        let n = value_noise(seed ^ 2, x * 8.0, y * 8.0) + 0.5 * value_noise(seed ^ 3, x * 25.0, y * 25.0);
        let shade = amp * (n / 1.5 - 0.5) + print(tb, seed ^ 5, x, y);
        (tb.wall_color.map(|c| c + shade), t)
    }
}

/// Print on the turntable at table point `(x, z)`, if it lies on the disc.
fn turntable(spec: &SceneSpec, x: f64, z: f64) -> Option<f64> {
    let tb = &spec.table;
    let obj = spec.objects.first()?;
    let (dx, dz) = (x - obj.x, z - obj.z);
    if tb.turntable_radius <= 0.0 || dx * dx + dz * dz > tb.turntable_radius * tb.turntable_radius {
        return None;
    }
    let (s, c) = obj.rotation.sin_cos();
    let disc = TableSpec {
        print_cell: tb.turntable_cell,
        ..*tb
    };
    Some(print(&disc, tb.texture_seed ^ 6, c * dx + s * dz, -s * dx + c * dz))
}

/// Sharp-edged print: each grid cell holds one rectangle with probability
/// `print_fill`, lighter or darker by `print_contrast`.
fn print(tb: &TableSpec, seed: u64, a: f64, b: f64) -> f64 {
    if tb.print_fill <= 0.0 || tb.print_contrast == 0.0 {
        return 0.0;
    }
    let (ca, cb) = ((a / tb.print_cell).floor(), (b / tb.print_cell).floor());
    let (i, j) = (ca as i64, cb as i64);
    if lattice(seed, i, j) >= tb.print_fill {
        return 0.0;
    }
    let (fa, fb) = (a / tb.print_cell - ca, b / tb.print_cell - cb);
    let r = |k: u64| lattice(seed.wrapping_add(k), i, j);
    let (a0, b0) = (0.6 * r(1), 0.6 * r(2));
    let (a1, b1) = (a0 + 0.15 + 0.25 * r(3), b0 + 0.15 + 0.25 * r(4));
    if fa >= a0 && fa < a1 && fb >= b0 && fb < b1 {
        if r(5) < 0.5 {
            -tb.print_contrast
        } else {
            tb.print_contrast
        }
    } else {
        0.0
    }
}

fn validate(spec: &SceneSpec) -> Result<()> {
    let c = &spec.camera;
    if c.width < 16 || c.height < 16 || c.fx <= 0.0 || c.fy <= 0.0 || c.mount_height <= 0.0 {
        return Err(Error::Spec("camera needs positive size, focal length and height".into()));
    }
    if !(0.0..=1.0).contains(&spec.noise.flicker_rate) || spec.noise.rgb_sigma < 0.0 {
        return Err(Error::Spec("flicker rate must be in [0, 1] and sigma non-negative".into()));
    }
    if spec.table.print_cell <= 0.0 || (spec.table.turntable_radius > 0.0 && spec.table.turntable_cell <= 0.0) {
        return Err(Error::Spec("print cell must be positive".into()));
    }
    if spec.frames == 0 {
        return Err(Error::Spec("frames must be at least 1".into()));
    }
    let mut ids = std::collections::HashSet::new();
    for o in &spec.objects {
        if !ids.insert(o.id.as_str()) {
            return Err(Error::Spec(format!("duplicate object id `{}`", o.id)));
        }
        let dims_ok = match o.shape {
            Shape::Box { width, depth, height } => width > 0.0 && depth > 0.0 && height > 0.0,
            Shape::Cylinder { radius, height } => radius > 0.0 && height > 0.0,
            Shape::Glass {
                bottom_radius,
                top_radius,
                height,
            } => bottom_radius > 0.0 && top_radius > 0.0 && height > 0.0,
        };
        if !dims_ok {
            return Err(Error::Spec(format!("object `{}` has non-positive dimensions", o.id)));
        }
        if o.category != Category::Diffuse && !o.shape.is_round() {
            return Err(Error::Spec(format!("object `{}`: see-through objects must be round", o.id)));
        }
        if o.category == Category::Composite && !(0.0 <= o.band.0 && o.band.0 < o.band.1 && o.band.1 <= 1.0) {
            return Err(Error::Spec(format!("object `{}`: band must satisfy 0 <= lo < hi <= 1", o.id)));
        }
        if o.z + o.shape.radius_at(0.0) >= spec.table.wall_distance {
            return Err(Error::Spec(format!("object `{}` stands behind the wall", o.id)));
        }
    }
    Ok(())
}

/// Renders the noise-free scene and its ground truth.
pub fn render_clean(spec: &SceneSpec) -> Result<CleanRender> {
    validate(spec)?;
    let cam = &spec.camera;
    let (w, h) = (cam.width, cam.height);
    let n = w * h;
    let origin = cam.origin();
    let light = [
        origin[0] + spec.light.offset[0],
        origin[1] + spec.light.offset[1],
        origin[2] + spec.light.offset[2],
    ];
    let placed: Vec<Placed> = spec.objects.iter().map(|o| place(spec, o)).collect();
    let nobj = placed.len();

    let mut rgb = vec![[0f32; 3]; n];
    let mut depth = vec![UNAVAILABLE; n];
    // 0 is background, i + 1 the frontmost object i
    let mut surface = vec![0u16; n];
    let mut coverage = vec![BinaryMask::new(w, h); nobj];
    let mut transparency = vec![BinaryMask::new(w, h); nobj];
    let mut highlights = vec![BinaryMask::new(w, h); nobj];
    let mut hits: Vec<(usize, Hit)> = Vec::with_capacity(nobj);

    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let d = cam.ray(u as f64, v as f64);
            let (bg, t_bg) = background(spec, origin, d);
            let mut color = bg;
            let mut z = t_bg;
            let mut valid = true;
            hits.clear();
            for (k, p) in placed.iter().enumerate() {
                if let Some(hit) = intersect(&p.spec.shape, p.to_local(origin), p.dir_to_local(d)) {
                    if hit.t < t_bg {
                        coverage[k].data[i] = true;
                        hits.push((k, hit));
                    }
                }
            }
            hits.sort_by(|a, b| b.1.t.total_cmp(&a.1.t));
            let mut front_highlight = None;
            for &(k, hit) in &hits {
                let p = &placed[k];
                let world = [origin[0] + hit.t * d[0], origin[1] + hit.t * d[1], origin[2] + hit.t * d[2]];
                if p.is_transparent_at(&hit) {
                    let g = &spec.glass;
                    color = color.map(|c| c * g.attenuation + g.offset);
                    valid = false;
                    front_highlight = None;
                    if !hit.top {
                        let az = (world[2] - p.spec.z).atan2(world[0] - p.spec.x);
                        let r = p.spec.shape.radius_at(hit.local[1]);
                        for &(baz, by) in &p.blobs {
                            let da = (az - baz + PI).rem_euclid(TAU) - PI;
                            let (ds, dy) = (da * r / BLOB_HALF_ARC, (hit.local[1] - by) / BLOB_HALF_HEIGHT);
                            if ds * ds + dy * dy <= 1.0 {
                                front_highlight = Some(k);
                            }
                        }
                    }
                } else {
                    let nw = p.normal_to_world(hit.normal);
                    let l = normalize([light[0] - world[0], light[1] - world[1], light[2] - world[2]]);
                    let lambert = dot(nw, l).max(0.0);
                    let albedo = if hit.top && p.spec.white_cap {
                        [255.0; 3]
                    } else {
                        let (s, t) = p.surface_coords(&hit);
                        p.texture.sample(s, t)
                    };
                    color = if hit.top && p.spec.white_cap {
                        albedo
                    } else {
                        albedo.map(|a| (a * (0.45 + 0.55 * lambert) * spec.light.intensity).min(240.0))
                    };
                    z = hit.t;
                    valid = true;
                    front_highlight = None;
                }
                surface[i] = k as u16 + 1;
            }
            if let Some(k) = front_highlight {
                highlights[k].data[i] = true;
            }
            if !valid {
                if let Some(&(k, _)) = hits.last() {
                    transparency[k].data[i] = true;
                }
            }
            rgb[i] = color.map(|c| c as f32);
            if valid {
                depth[i] = (z * 1000.0).round().clamp(1.0, f64::from(u16::MAX)) as u16;
            }
        }
    }

    // Faint dark rim along each see-through silhouette.
    for (k, p) in placed.iter().enumerate() {
        if p.spec.category == Category::Diffuse {
            continue;
        }
        let cov = &coverage[k];
        for v in 0..h {
            for u in 0..w {
                let i = v * w + u;
                if !cov.data[i] || surface[i] != k as u16 + 1 || depth[i] != UNAVAILABLE {
                    continue;
                }
                let edge = [(0isize, -1isize), (0, 1), (-1, 0), (1, 0)].iter().any(|&(dx, dy)| {
                    let (x, y) = (u as isize + dx, v as isize + dy);
                    x < 0 || y < 0 || x >= w as isize || y >= h as isize || !cov.get(x as usize, y as usize)
                });
                if edge && !highlights[k].data[i] {
                    let c = spec.glass.rim_contrast as f32;
                    rgb[i] = rgb[i].map(|x| x - c);
                }
            }
        }
    }
    for (k, hl) in highlights.iter().enumerate() {
        for (i, &on) in hl.data.iter().enumerate() {
            if on && surface[i] == k as u16 + 1 {
                rgb[i] = [HIGHLIGHT_LEVEL; 3];
            }
        }
    }

    // Occlusion and framing checks on unoccluded coverage boxes.
    let boxes: Vec<(usize, usize, usize, usize)> = coverage
        .iter()
        .zip(&spec.objects)
        .map(|(c, o)| {
            let bb = c
                .bounding_box()
                .ok_or_else(|| Error::Spec(format!("object `{}` is not visible", o.id)))?;
            if bb.0 == 0 || bb.1 == 0 || bb.2 + 1 == w || bb.3 + 1 == h {
                return Err(Error::Spec(format!("object `{}` leaves the frame", o.id)));
            }
            Ok(bb)
        })
        .collect::<Result<_>>()?;
    for a in 0..nobj {
        for b in a + 1..nobj {
            let (p, q) = (boxes[a], boxes[b]);
            let ix = (p.2.min(q.2) + 1).saturating_sub(p.0.max(q.0));
            let iy = (p.3.min(q.3) + 1).saturating_sub(p.1.max(q.1));
            let area = |r: (usize, usize, usize, usize)| ((r.2 - r.0 + 1) * (r.3 - r.1 + 1)) as f64;
            let overlap = (ix * iy) as f64 / area(p).min(area(q));
            if overlap > spec.occlusion_limit {
                return Err(Error::Spec(format!(
                    "objects `{}` and `{}` overlap {:.0}% (limit {:.0}%)",
                    spec.objects[a].id,
                    spec.objects[b].id,
                    overlap * 100.0,
                    spec.occlusion_limit * 100.0
                )));
            }
        }
    }

    let edge_band = edge_band(&surface, &depth, w, h, spec.noise.edge_band);
    let objects = placed
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let silhouette = BinaryMask {
                width: w,
                height: h,
                data: surface.iter().map(|&s| s == k as u16 + 1).collect(),
            };
            let hl = highlights[k].and(&silhouette).expect("same size");
            let world = [p.spec.x, p.spec.shape.centroid_height(), p.spec.z];
            ObjectTruth {
                object_id: p.spec.id.clone(),
                category: p.spec.category,
                transparency: transparency[k].clone(),
                highlights: hl,
                silhouette,
                centroid: cam.world_to_camera(world),
            }
        })
        .collect();
    Ok(CleanRender {
        width: w,
        height: h,
        intrinsics: cam.intrinsics(),
        rgb,
        depth,
        truth: GroundTruth { objects, edge_band },
    })
}

/// Valid pixels within `band` of a different surface or of missing depth.
fn edge_band(surface: &[u16], depth: &[u16], w: usize, h: usize, band: usize) -> BinaryMask {
    let mut out = BinaryMask::new(w, h);
    if band == 0 {
        return out;
    }
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            if depth[i] == UNAVAILABLE {
                continue;
            }
            'search: for y in v.saturating_sub(band)..=(v + band).min(h - 1) {
                for x in u.saturating_sub(band)..=(u + band).min(w - 1) {
                    let j = y * w + x;
                    if surface[j] != surface[i] || depth[j] == UNAVAILABLE {
                        out.data[i] = true;
                        break 'search;
                    }
                }
            }
        }
    }
    out
}

impl CleanRender {
    /// Frame `k` of the sequence: color noise and edge flicker drawn from
    /// a stream derived from `(seed, k)`.
    pub fn frame(&self, noise: &NoiseSpec, seed: u64, k: usize) -> RgbdFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64));
        let gauss = Normal::new(0.0f32, noise.rgb_sigma.max(0.0) as f32).expect("finite sigma");
        let rgb = self
            .rgb
            .iter()
            .map(|px| {
                px.map(|c| {
                    let v = if noise.rgb_sigma > 0.0 { c + gauss.sample(&mut rng) } else { c };
                    v.round().clamp(0.0, 255.0) as u8
                })
            })
            .collect();
        let mut depth = self.depth.clone();
        if noise.flicker_rate > 0.0 {
            for (d, &band) in depth.iter_mut().zip(&self.truth.edge_band.data) {
                if band && rng.random_bool(noise.flicker_rate) {
                    *d = UNAVAILABLE;
                }
            }
        }
        let mut f = RgbdFrame::new(self.width, self.height, rgb, depth, self.intrinsics).expect("consistent sizes");
        f.frame_id = k as u64;
        f
    }
}

/// Renders `spec.frames` noisy frames and the ground truth.
pub fn render(spec: &SceneSpec) -> Result<(Vec<RgbdFrame>, GroundTruth)> {
    let clean = render_clean(spec)?;
    let frames = (0..spec.frames).map(|k| clean.frame(&spec.noise, spec.seed, k)).collect();
    Ok((frames, clean.truth))
}

/// `n_views` copies of `spec` with object `object_index` rotated in uniform
/// steps over a full turn. View 0 is `spec` itself; later views get derived
/// noise seeds, as separate captures would.
pub fn rotate_views(spec: &SceneSpec, object_index: usize, n_views: usize) -> Result<Vec<SceneSpec>> {
    if object_index >= spec.objects.len() {
        return Err(Error::Spec(format!("no object at index {object_index}")));
    }
    Ok((0..n_views.max(1))
        .map(|k| {
            let mut s = spec.clone();
            if k > 0 {
                let base = spec.objects[object_index].rotation;
                s.objects[object_index].rotation = base + TAU * k as f64 / n_views as f64;
                s.seed = derive_seed(spec.seed, k as u64);
            }
            s
        })
        .collect())
}

fn shape_text(shape: &Shape) -> Vec<(&'static str, String)> {
    match *shape {
        Shape::Box { width, depth, height } => vec![
            ("shape", "box".into()),
            ("width", width.to_string()),
            ("depth", depth.to_string()),
            ("height", height.to_string()),
        ],
        Shape::Cylinder { radius, height } => vec![
            ("shape", "cylinder".into()),
            ("radius", radius.to_string()),
            ("height", height.to_string()),
        ],
        Shape::Glass {
            bottom_radius,
            top_radius,
            height,
        } => vec![
            ("shape", "glass".into()),
            ("bottom_radius", bottom_radius.to_string()),
            ("top_radius", top_radius.to_string()),
            ("height", height.to_string()),
        ],
    }
}

fn triple(v: [f64; 3]) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

impl SceneSpec {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.camera;
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("frames", self.frames.to_string());
        kv("occlusion_limit", self.occlusion_limit.to_string());
        kv("camera.width", c.width.to_string());
        kv("camera.height", c.height.to_string());
        kv("camera.fx", c.fx.to_string());
        kv("camera.fy", c.fy.to_string());
        kv("camera.cx", c.cx.to_string());
        kv("camera.cy", c.cy.to_string());
        kv("camera.mount_height", c.mount_height.to_string());
        kv("camera.pitch_deg", c.pitch_deg.to_string());
        kv("table.wall_distance", self.table.wall_distance.to_string());
        kv("table.texture_seed", self.table.texture_seed.to_string());
        kv("table.texture_contrast", self.table.texture_contrast.to_string());
        kv("table.table_color", triple(self.table.table_color));
        kv("table.wall_color", triple(self.table.wall_color));
        kv("table.print_cell", self.table.print_cell.to_string());
        kv("table.print_fill", self.table.print_fill.to_string());
        kv("table.print_contrast", self.table.print_contrast.to_string());
        kv("table.turntable_radius", self.table.turntable_radius.to_string());
        kv("table.turntable_cell", self.table.turntable_cell.to_string());
        kv("light.offset", triple(self.light.offset));
        kv("light.intensity", self.light.intensity.to_string());
        kv("noise.rgb_sigma", self.noise.rgb_sigma.to_string());
        kv("noise.flicker_rate", self.noise.flicker_rate.to_string());
        kv("noise.edge_band", self.noise.edge_band.to_string());
        kv("glass.attenuation", self.glass.attenuation.to_string());
        kv("glass.offset", self.glass.offset.to_string());
        kv("glass.rim_contrast", self.glass.rim_contrast.to_string());
        for (i, o) in self.objects.iter().enumerate() {
            kv(&format!("object.{i}.id"), o.id.clone());
            kv(&format!("object.{i}.category"), o.category.to_string());
            for (k, v) in shape_text(&o.shape) {
                kv(&format!("object.{i}.{k}"), v);
            }
            kv(&format!("object.{i}.x"), o.x.to_string());
            kv(&format!("object.{i}.z"), o.z.to_string());
            kv(&format!("object.{i}.rotation"), o.rotation.to_string());
            kv(&format!("object.{i}.texture_seed"), o.texture_seed.to_string());
            kv(&format!("object.{i}.band"), format!("{},{}", o.band.0, o.band.1));
            kv(&format!("object.{i}.highlights"), o.highlights.to_string());
            kv(&format!("object.{i}.white_cap"), o.white_cap.to_string());
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = SceneSpec::default();
        let mut objects: std::collections::BTreeMap<usize, Vec<(String, String)>> = Default::default();
        for (key, value) in parse_key_values(text) {
            let bad = |e: &dyn fmt::Display| Error::Spec(format!("{key}: {e}"));
            let f = || value.parse::<f64>().map_err(|e| bad(&e));
            let u = || value.parse::<usize>().map_err(|e| bad(&e));
            let t = || -> Result<[f64; 3]> {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| bad(&e))?;
                parts.try_into().map_err(|_| bad(&"expected three values"))
            };
            match key.as_str() {
                "seed" => spec.seed = value.parse().map_err(|e| bad(&e))?,
                "frames" => spec.frames = u()?,
                "occlusion_limit" => spec.occlusion_limit = f()?,
                "camera.width" => spec.camera.width = u()?,
                "camera.height" => spec.camera.height = u()?,
                "camera.fx" => spec.camera.fx = f()?,
                "camera.fy" => spec.camera.fy = f()?,
                "camera.cx" => spec.camera.cx = f()?,
                "camera.cy" => spec.camera.cy = f()?,
                "camera.mount_height" => spec.camera.mount_height = f()?,
                "camera.pitch_deg" => spec.camera.pitch_deg = f()?,
                "table.wall_distance" => spec.table.wall_distance = f()?,
                "table.texture_seed" => spec.table.texture_seed = value.parse().map_err(|e| bad(&e))?,
                "table.texture_contrast" => spec.table.texture_contrast = f()?,
                "table.table_color" => spec.table.table_color = t()?,
                "table.wall_color" => spec.table.wall_color = t()?,
                "table.print_cell" => spec.table.print_cell = f()?,
                "table.print_fill" => spec.table.print_fill = f()?,
                "table.print_contrast" => spec.table.print_contrast = f()?,
                "table.turntable_radius" => spec.table.turntable_radius = f()?,
                "table.turntable_cell" => spec.table.turntable_cell = f()?,
                "light.offset" => spec.light.offset = t()?,
                "light.intensity" => spec.light.intensity = f()?,
                "noise.rgb_sigma" => spec.noise.rgb_sigma = f()?,
                "noise.flicker_rate" => spec.noise.flicker_rate = f()?,
                "noise.edge_band" => spec.noise.edge_band = u()?,
                "glass.attenuation" => spec.glass.attenuation = f()?,
                "glass.offset" => spec.glass.offset = f()?,
                "glass.rim_contrast" => spec.glass.rim_contrast = f()?,
                k if k.starts_with("object.") => {
                    let rest = &k["object.".len()..];
                    let (idx, field) = rest
                        .split_once('.')
                        .ok_or_else(|| Error::Spec(format!("malformed key `{k}`")))?;
                    let idx: usize = idx.parse().map_err(|e| bad(&e))?;
                    objects.entry(idx).or_default().push((field.to_string(), value.clone()));
                }
                other => return Err(Error::Spec(format!("unknown key `{other}`"))),
            }
        }
        for (idx, fields) in objects {
            spec.objects.push(parse_object(idx, &fields)?);
        }
        validate(&spec)?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn parse_object(idx: usize, fields: &[(String, String)]) -> Result<ObjectSpec> {
    let get = |name: &str| fields.iter().rev().find(|(k, _)| k == name).map(|(_, v)| v.as_str());
    let need = |name: &str| get(name).ok_or_else(|| Error::Spec(format!("object.{idx}.{name} missing")));
    let num = |name: &str| -> Result<f64> {
        need(name)?
            .parse::<f64>()
            .map_err(|e| Error::Spec(format!("object.{idx}.{name}: {e}")))
    };
    for (k, _) in fields {
        const KNOWN: [&str; 16] = [
            "id", "category", "shape", "width", "depth", "height", "radius", "bottom_radius",
            "top_radius", "x", "z", "rotation", "texture_seed", "band", "highlights", "white_cap",
        ];
        if !KNOWN.contains(&k.as_str()) {
            return Err(Error::Spec(format!("unknown key `object.{idx}.{k}`")));
        }
    }
    let shape = match need("shape")? {
        "box" => Shape::Box {
            width: num("width")?,
            depth: num("depth")?,
            height: num("height")?,
        },
        "cylinder" => Shape::Cylinder {
            radius: num("radius")?,
            height: num("height")?,
        },
        "glass" => Shape::Glass {
            bottom_radius: num("bottom_radius")?,
            top_radius: num("top_radius")?,
            height: num("height")?,
        },
        other => return Err(Error::Spec(format!("unknown shape `{other}`"))),
    };
    let mut o = ObjectSpec::new(need("id")?, need("category")?.parse()?, shape, num("x")?, num("z")?);
    if get("rotation").is_some() {
        o.rotation = num("rotation")?;
    }
    if let Some(v) = get("texture_seed") {
        o.texture_seed = v.parse().map_err(|e| Error::Spec(format!("object.{idx}.texture_seed: {e}")))?;
    }
    if let Some(v) = get("band") {
        let (a, b) = v
            .split_once(',')
            .ok_or_else(|| Error::Spec(format!("object.{idx}.band: expected lo,hi")))?;
        let p = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Spec(format!("object.{idx}.band: {e}")));
        o.band = (p(a)?, p(b)?);
    }
    if let Some(v) = get("highlights") {
        o.highlights = v.parse().map_err(|e| Error::Spec(format!("object.{idx}.highlights: {e}")))?;
    }
    if let Some(v) = get("white_cap") {
        o.white_cap = v.parse().map_err(|e| Error::Spec(format!("object.{idx}.white_cap: {e}")))?;
    }
    Ok(o)
}

/// Writes a rendered sequence as `frame_NNN/` directories plus ground truth:
/// one `mask_<id>.png` silhouette per object and a `truth.txt` with
/// centroids in camera coordinates.
pub fn save_scene(dir: impl AsRef<Path>, spec: &SceneSpec, frames: &[RgbdFrame], truth: &GroundTruth) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in frames {
        save_frame(f, dir.join(format!("frame_{:03}", f.frame_id)), &[])?;
    }
    let mut text = String::new();
    for o in &truth.objects {
        let c = o.centroid;
        let _ = writeln!(text, "{}.category = {}", o.object_id, o.category);
        let _ = writeln!(text, "{}.centroid = {},{},{}", o.object_id, c.x, c.y, c.z);
        save_mask(&o.silhouette, dir.join(format!("mask_{}.png", o.object_id)))?;
    }
    let p = dir.join("truth.txt");
    fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    let p = dir.join("scene.txt");
    fs::write(&p, spec.to_text()).map_err(|e| Error::io(&p, e))
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img = image::GrayImage::from_fn(mask.width as u32, mask.height as u32, |x, y| {
        image::Luma([if mask.get(x as usize, y as usize) { 255 } else { 0 }])
    });
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            source: e,
        })?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(BinaryMask::from_fn(w, h, |x, y| img.get_pixel(x as u32, y as u32)[0] >= 128))
}
