//! Quantization, spreading and precomputed similarity responses.
//!
//! Each channel is reduced to a per-pixel bin index. Spreading ORs the bin bit
//! of every pixel into a Chebyshev neighbourhood of radius `T`, so a template
//! feature tolerates small misalignments. A lookup table maps
//! `(template bin, spread bitmask)` to an integer similarity in `0..=100`, and
//! the per-bin response images are stored row-major so scoring a feature at an
//! anchor is a single indexed read.
//!
//! Similarities are `round(100 * |cos d|)` for orientation channels and
//! `round(100 * max(0, cos d))` for azimuth sectors of the normal channel,
//! with `d` the angle between bin centers. Keeping them integral makes scores
//! exactly reproducible.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::modalities::{NormalMap, OrientationMap};

/// Marker for "no feature at this pixel".
pub const NO_BIN: u8 = u8::MAX;
pub const ORIENTATION_BINS: usize = 8;
pub const NORMAL_AZIMUTH_BINS: usize = 8;
/// Normals closer than this to the optical axis fall in the flat bin.
pub const FLAT_INCLINATION_DEG: f64 = 15.0;
pub const MAX_BINS: usize = 16;
pub const DEFAULT_SPREAD: usize = 4;

/// `floor(theta / (pi / n_bins))`, with `theta == pi` wrapping to bin 0.
pub fn quantize_orientation_bins(theta: f64, n_bins: usize) -> Result<u8> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::OrientationOutOfRange(theta));
    }
    if theta == PI {
        return Ok(0);
    }
    let bin = (theta / (PI / n_bins as f64)).floor() as usize;
    Ok(bin.min(n_bins - 1) as u8)
}

pub fn quantize_orientation(theta: f64) -> Result<u8> {
    quantize_orientation_bins(theta, ORIENTATION_BINS)
}

/// Azimuth sector of a camera-facing unit normal, or the flat bin
/// (`azimuth_bins`) when the normal is within 15 degrees of the optical axis.
pub fn quantize_normal_bins(n: [f64; 3], azimuth_bins: usize) -> Result<u8> {
    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-3 || n[2] > 1e-9 {
        return Err(Error::InvalidNormal(n[0], n[1], n[2]));
    }
    let inclination = (-n[2] / norm).clamp(-1.0, 1.0).acos();
    if inclination < FLAT_INCLINATION_DEG.to_radians() {
        return Ok(azimuth_bins as u8);
    }
    let azimuth = n[1].atan2(n[0]).rem_euclid(2.0 * PI);
    let bin = (azimuth / (2.0 * PI / azimuth_bins as f64)).floor() as usize;
    Ok(bin.min(azimuth_bins - 1) as u8)
}

pub fn quantize_normal(n: [f64; 3]) -> Result<u8> {
    quantize_normal_bins(n, NORMAL_AZIMUTH_BINS)
}

/// Which similarity function a set of bins follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinKind {
    /// Undirected orientations over `[0, pi)`.
    Orientation { bins: usize },
    /// Azimuth sectors over `[0, 2 pi)` plus one trailing flat bin.
    Normal { azimuth_bins: usize },
}

impl BinKind {
    pub fn n_bins(self) -> usize {
        match self {
            BinKind::Orientation { bins } => bins,
            BinKind::Normal { azimuth_bins } => azimuth_bins + 1,
        }
    }

    /// Similarity in percent between two bin centers.
    pub fn similarity(self, a: u8, b: u8) -> u8 {
        let (a, b) = (a as usize, b as usize);
        let cosine = match self {
            BinKind::Orientation { bins } => {
                let step = PI / bins as f64;
                ((a as f64 + 0.5) * step - (b as f64 + 0.5) * step).cos().abs()
            }
            BinKind::Normal { azimuth_bins } => {
                let flat = azimuth_bins;
                match (a == flat, b == flat) {
                    (true, true) => 1.0,
                    (true, false) | (false, true) => 0.0,
                    (false, false) => {
                        let step = 2.0 * PI / azimuth_bins as f64;
                        ((a as f64 - b as f64) * step).cos().max(0.0)
                    }
                }
            }
        };
        (100.0 * cosine).round() as u8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMap {
    pub width: usize,
    pub height: usize,
    pub kind: BinKind,
    /// Bin per pixel, [`NO_BIN`] where the source was invalid.
    pub bins: Vec<u8>,
}

impl QuantizedMap {
    pub fn empty(width: usize, height: usize, kind: BinKind) -> Self {
        Self {
            width,
            height,
            kind,
            bins: vec![NO_BIN; width * height],
        }
    }

    pub fn from_orientations(map: &OrientationMap, bins: usize) -> Self {
        let data = map
            .orientation
            .iter()
            .zip(&map.valid)
            .map(|(&t, &v)| {
                if v {
                    quantize_orientation_bins(f64::from(t), bins).unwrap_or(NO_BIN)
                } else {
                    NO_BIN
                }
            })
            .collect();
        Self {
            width: map.width,
            height: map.height,
            kind: BinKind::Orientation { bins },
            bins: data,
        }
    }

    pub fn from_normals(map: &NormalMap, azimuth_bins: usize) -> Self {
        let data = map
            .normals
            .iter()
            .zip(&map.valid)
            .map(|(&n, &v)| {
                if v {
                    quantize_normal_bins(n, azimuth_bins).unwrap_or(NO_BIN)
                } else {
                    NO_BIN
                }
            })
            .collect();
        Self {
            width: map.width,
            height: map.height,
            kind: BinKind::Normal { azimuth_bins },
            bins: data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.bins[y * self.width + x]
    }

    pub fn defined_count(&self) -> usize {
        self.bins.iter().filter(|&&b| b != NO_BIN).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpreadMap {
    pub width: usize,
    pub height: usize,
    pub radius: usize,
    pub masks: Vec<u16>,
}

impl SpreadMap {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.masks[y * self.width + x]
    }
}

/// ORs each defined bin into every pixel within Chebyshev distance `radius`.
pub fn spread(q: &QuantizedMap, radius: usize) -> SpreadMap {
    let (w, h) = (q.width, q.height);
    let bits: Vec<u16> = q
        .bins
        .iter()
        .map(|&b| if b == NO_BIN { 0 } else { 1u16 << b })
        .collect();
    let mut rows = vec![0u16; w * h];
    for y in 0..h {
        let src = &bits[y * w..(y + 1) * w];
        let dst = &mut rows[y * w..(y + 1) * w];
        for (x, &b) in src.iter().enumerate() {
            if b != 0 {
                let (lo, hi) = (x.saturating_sub(radius), (x + radius).min(w - 1));
                for d in &mut dst[lo..=hi] {
                    *d |= b;
                }
            }
        }
    }
    let mut masks = vec![0u16; w * h];
    for y in 0..h {
        let (lo, hi) = (y.saturating_sub(radius), (y + radius).min(h - 1));
        for yy in lo..=hi {
            let src = &rows[yy * w..(yy + 1) * w];
            let dst = &mut masks[y * w..(y + 1) * w];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d |= s;
            }
        }
    }
    SpreadMap {
        width: w,
        height: h,
        radius,
        masks,
    }
}

/// `table[bin][mask]`: best similarity between `bin` and any bit of `mask`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseLut {
    pub kind: BinKind,
    table: Vec<u8>,
}

impl ResponseLut {
    pub fn new(kind: BinKind) -> Self {
        let n = kind.n_bins();
        assert!((1..=MAX_BINS).contains(&n), "bin count {n} out of range");
        let masks = 1usize << n;
        let mut table = vec![0u8; n * masks];
        for bin in 0..n {
            let row = &mut table[bin * masks..(bin + 1) * masks];
            for mask in 1..masks {
                let low = mask.trailing_zeros() as u8;
                let rest = row[mask & (mask - 1)];
                row[mask] = rest.max(kind.similarity(bin as u8, low));
            }
        }
        Self { kind, table }
    }

    #[inline]
    pub fn get(&self, bin: u8, mask: u16) -> u8 {
        self.table[((bin as usize) << self.kind.n_bins()) | mask as usize]
    }
}

/// Per-bin response images, bin-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMaps {
    pub width: usize,
    pub height: usize,
    pub n_bins: usize,
    data: Vec<u8>,
}

impl ResponseMaps {
    pub fn empty(width: usize, height: usize, n_bins: usize) -> Self {
        Self {
            width,
            height,
            n_bins,
            data: vec![0; width * height * n_bins],
        }
    }

    /// The whole image for one bin, row-major.
    #[inline]
    pub fn plane(&self, bin: u8) -> &[u8] {
        let n = self.width * self.height;
        &self.data[bin as usize * n..(bin as usize + 1) * n]
    }

    #[inline]
    pub fn get(&self, bin: u8, x: usize, y: usize) -> u8 {
        self.data[(bin as usize * self.height + y) * self.width + x]
    }
}

pub fn build_response_maps(spread: &SpreadMap, lut: &ResponseLut) -> ResponseMaps {
    let n_bins = lut.kind.n_bins();
    let mut maps = ResponseMaps::empty(spread.width, spread.height, n_bins);
    let n = spread.width * spread.height;
    for bin in 0..n_bins {
        let plane = &mut maps.data[bin * n..(bin + 1) * n];
        for (out, &mask) in plane.iter_mut().zip(&spread.masks) {
            *out = lut.get(bin as u8, mask);
        }
    }
    maps
}
