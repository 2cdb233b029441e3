//! Runtime parameters and the subset of them a template database is bound to.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::parse_key_values;
use crate::modalities::{DEFAULT_PATCH_RADIUS, DEFAULT_SPECULAR_THRESHOLD, DEFAULT_TAU_MAG};
use crate::preprocess::DEFAULT_WINDOW;
use crate::response::{BinKind, DEFAULT_SPREAD, MAX_BINS, NORMAL_AZIMUTH_BINS, ORIENTATION_BINS};

pub const DEFAULT_THRESHOLD: f64 = 75.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchConfig {
    pub orientation_bins: usize,
    pub normal_azimuth_bins: usize,
    /// Spread radius `T` in pixels.
    pub spread: usize,
    pub tau_mag: f32,
    pub specular_threshold: u8,
    pub k_per_channel: usize,
    /// Percent score at which a training view counts as already covered.
    pub tau_dup: f64,
    pub nms_radius: usize,
    pub window_size: usize,
    pub patch_radius: usize,
    pub mask_dilation: usize,
    pub feature_spacing: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            orientation_bins: ORIENTATION_BINS,
            normal_azimuth_bins: NORMAL_AZIMUTH_BINS,
            spread: DEFAULT_SPREAD,
            tau_mag: DEFAULT_TAU_MAG,
            specular_threshold: DEFAULT_SPECULAR_THRESHOLD,
            k_per_channel: 16,
            tau_dup: 97.0,
            nms_radius: 16,
            window_size: DEFAULT_WINDOW,
            patch_radius: DEFAULT_PATCH_RADIUS,
            mask_dilation: 2,
            feature_spacing: 5,
        }
    }
}

/// The parameters a stored template database depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fingerprint {
    pub orientation_bins: u8,
    pub normal_bins: u8,
    pub spread: u8,
    pub tau_mag: f32,
    pub specular_threshold: u8,
    pub k_per_channel: u16,
}

impl MatchConfig {
    pub fn orientation_kind(&self) -> BinKind {
        BinKind::Orientation {
            bins: self.orientation_bins,
        }
    }

    pub fn normal_kind(&self) -> BinKind {
        BinKind::Normal {
            azimuth_bins: self.normal_azimuth_bins,
        }
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint {
            orientation_bins: self.orientation_bins as u8,
            normal_bins: (self.normal_azimuth_bins + 1) as u8,
            spread: self.spread as u8,
            tau_mag: self.tau_mag,
            specular_threshold: self.specular_threshold,
            k_per_channel: self.k_per_channel as u16,
        }
    }

    /// Adopts the fingerprinted values of a stored database.
    pub fn with_fingerprint(mut self, fp: &Fingerprint) -> Result<Self> {
        self.orientation_bins = fp.orientation_bins as usize;
        self.normal_azimuth_bins = (fp.normal_bins as usize)
            .checked_sub(1)
            .ok_or_else(|| Error::Config("normal bin count 0".into()))?;
        self.spread = fp.spread as usize;
        self.tau_mag = fp.tau_mag;
        self.specular_threshold = fp.specular_threshold;
        self.k_per_channel = fp.k_per_channel as usize;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(1..=MAX_BINS).contains(&self.orientation_bins) {
            return bad(format!("orientation_bins {} not in 1..=16", self.orientation_bins));
        }
        if !(1..MAX_BINS).contains(&self.normal_azimuth_bins) {
            return bad(format!("normal_azimuth_bins {} not in 1..=15", self.normal_azimuth_bins));
        }
        if self.spread > u8::MAX as usize || self.k_per_channel == 0 || self.k_per_channel > u16::MAX as usize {
            return bad("spread or k_per_channel out of range".into());
        }
        if !(0.0..=100.0).contains(&self.tau_dup) {
            return bad(format!("tau_dup {} not a percentage", self.tau_dup));
        }
        if self.window_size == 0 || self.patch_radius == 0 || self.patch_radius > 5 {
            return bad("window_size must be >= 1 and patch_radius in 1..=5".into());
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = MatchConfig::default();
        for (key, value) in parse_key_values(text) {
            let int = || {
                value
                    .parse::<usize>()
                    .map_err(|e| Error::Config(format!("{key}: {e}")))
            };
            let float = || {
                value
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("{key}: {e}")))
            };
            match key.as_str() {
                "orientation_bins" => cfg.orientation_bins = int()?,
                "normal_azimuth_bins" => cfg.normal_azimuth_bins = int()?,
                "spread" | "T" => cfg.spread = int()?,
                "tau_mag" => cfg.tau_mag = float()? as f32,
                "specular_threshold" => {
                    cfg.specular_threshold = u8::try_from(int()?)
                        .map_err(|_| Error::Config("specular_threshold > 255".into()))?
                }
                "k_per_channel" => cfg.k_per_channel = int()?,
                "tau_dup" => cfg.tau_dup = float()?,
                "nms_radius" => cfg.nms_radius = int()?,
                "window_size" => cfg.window_size = int()?,
                "patch_radius" => cfg.patch_radius = int()?,
                "mask_dilation" => cfg.mask_dilation = int()?,
                "feature_spacing" => cfg.feature_spacing = int()?,
                other => return Err(Error::Config(format!("unknown config key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "orientation_bins = {}", self.orientation_bins);
        let _ = writeln!(s, "normal_azimuth_bins = {}", self.normal_azimuth_bins);
        let _ = writeln!(s, "spread = {}", self.spread);
        let _ = writeln!(s, "tau_mag = {}", self.tau_mag);
        let _ = writeln!(s, "specular_threshold = {}", self.specular_threshold);
        let _ = writeln!(s, "k_per_channel = {}", self.k_per_channel);
        let _ = writeln!(s, "tau_dup = {}", self.tau_dup);
        let _ = writeln!(s, "nms_radius = {}", self.nms_radius);
        let _ = writeln!(s, "window_size = {}", self.window_size);
        let _ = writeln!(s, "patch_radius = {}", self.patch_radius);
        let _ = writeln!(s, "mask_dilation = {}", self.mask_dilation);
        let _ = writeln!(s, "feature_spacing = {}", self.feature_spacing);
        s
    }
}
