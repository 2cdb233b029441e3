//! Per-frame cue computation shared by template extraction and matching.
//!
//! A frame is turned into up to five quantized sources. Their response maps
//! live in four slots: M1 gradients, surface normals, the transparency
//! contour and the specular contour. Native normals (M2) and normals of the
//! extruded depth (M3) are disjoint by construction, since a native normal
//! needs valid depth at its center and an extruded one needs it unavailable,
//! so both are merged into the single normal slot.

use crate::config::MatchConfig;
use crate::error::Result;
use crate::frame::{CameraIntrinsics, RgbdFrame};
use crate::localization::scanline_depth_fill;
use crate::modalities::{
    crossmodal_specular_filter, depth_normals, extruded_normals, intensity_gradients,
    mask_contour_orientations, nan_mask, specular_candidates, BinaryMask, Channel, ChannelSet,
    NormalMap, OrientationMap,
};
use crate::response::{
    build_response_maps, spread, BinKind, QuantizedMap, ResponseLut, ResponseMaps, NO_BIN,
};

/// Where a feature reads its response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Gradient = 0,
    Normal = 1,
    TransparencyContour = 2,
    SpecularContour = 3,
}

/// Maps a stored `(channel, bin)` pair to its response slot and slot-local bin.
/// M3 bins at or above `orientation_bins` are extruded-normal bins.
#[inline]
pub fn slot_of(channel: Channel, bin: u8, orientation_bins: usize) -> (Slot, u8) {
    match channel {
        Channel::M1 => (Slot::Gradient, bin),
        Channel::M2 => (Slot::Normal, bin),
        Channel::M3 if (bin as usize) < orientation_bins => (Slot::TransparencyContour, bin),
        Channel::M3 => (Slot::Normal, bin - orientation_bins as u8),
        Channel::M4 => (Slot::SpecularContour, bin),
    }
}

/// Number of storable bins for `channel` under `cfg`.
pub fn channel_bins(channel: Channel, cfg: &MatchConfig) -> usize {
    let normals = cfg.normal_azimuth_bins + 1;
    match channel {
        Channel::M1 | Channel::M4 => cfg.orientation_bins,
        Channel::M2 => normals,
        Channel::M3 => cfg.orientation_bins + normals,
    }
}

#[derive(Debug, Clone)]
pub struct FrameCues {
    pub width: usize,
    pub height: usize,
    pub channels: ChannelSet,
    pub intrinsics: CameraIntrinsics,
    pub nan: BinaryMask,
    pub filled_depth: Vec<u16>,
    pub gradients: Option<OrientationMap>,
    pub normals: Option<NormalMap>,
    pub transparency_contour: Option<OrientationMap>,
    pub extruded: Option<NormalMap>,
    pub specular: Option<BinaryMask>,
    pub specular_contour: Option<OrientationMap>,
    pub q_gradient: Option<QuantizedMap>,
    pub q_normal: Option<QuantizedMap>,
    pub q_transparency: Option<QuantizedMap>,
    pub q_extruded: Option<QuantizedMap>,
    pub q_specular: Option<QuantizedMap>,
}

impl FrameCues {
    /// Computes only what `channels` needs.
    pub fn compute(frame: &RgbdFrame, channels: ChannelSet, cfg: &MatchConfig) -> Result<Self> {
        let (w, h) = frame.dims();
        let nan = nan_mask(&frame.depth, w, h);
        let filled_depth = scanline_depth_fill(&frame.depth, w, h);
        let ob = cfg.orientation_bins;
        let nb = cfg.normal_azimuth_bins;

        let gradients = if channels.contains(Channel::M1) {
            Some(intensity_gradients(frame, cfg.tau_mag)?)
        } else {
            None
        };
        let normals = channels
            .contains(Channel::M2)
            .then(|| depth_normals(&frame.depth, w, h, &frame.intrinsics, cfg.patch_radius));
        let (transparency_contour, extruded) = if channels.contains(Channel::M3) {
            (
                Some(mask_contour_orientations(&nan, cfg.tau_mag)),
                Some(extruded_normals(&filled_depth, &nan, &frame.intrinsics, cfg.patch_radius)),
            )
        } else {
            (None, None)
        };
        let specular = if channels.contains(Channel::M4) {
            let cand = specular_candidates(frame, cfg.specular_threshold);
            Some(crossmodal_specular_filter(&cand, &nan)?)
        } else {
            None
        };
        let specular_contour = specular.as_ref().map(|m| mask_contour_orientations(m, cfg.tau_mag));

        Ok(Self {
            width: w,
            height: h,
            channels,
            intrinsics: frame.intrinsics,
            q_gradient: gradients.as_ref().map(|m| QuantizedMap::from_orientations(m, ob)),
            q_normal: normals.as_ref().map(|m| QuantizedMap::from_normals(m, nb)),
            q_transparency: transparency_contour
                .as_ref()
                .map(|m| QuantizedMap::from_orientations(m, ob)),
            q_extruded: extruded.as_ref().map(|m| QuantizedMap::from_normals(m, nb)),
            q_specular: specular_contour
                .as_ref()
                .map(|m| QuantizedMap::from_orientations(m, ob)),
            nan,
            filled_depth,
            gradients,
            normals,
            transparency_contour,
            extruded,
            specular,
            specular_contour,
        })
    }

    /// Native normals with extruded normals filled in where depth is missing.
    fn merged_normals(&self, channels: ChannelSet, nb: usize) -> Option<QuantizedMap> {
        let native = self.q_normal.as_ref().filter(|_| channels.contains(Channel::M2));
        let extruded = self.q_extruded.as_ref().filter(|_| channels.contains(Channel::M3));
        match (native, extruded) {
            (None, None) => None,
            (Some(q), None) | (None, Some(q)) => Some(q.clone()),
            (Some(native), Some(ext)) => {
                let mut q = QuantizedMap::empty(self.width, self.height, BinKind::Normal { azimuth_bins: nb });
                for (i, out) in q.bins.iter_mut().enumerate() {
                    *out = if native.bins[i] != NO_BIN {
                        native.bins[i]
                    } else {
                        ext.bins[i]
                    };
                }
                Some(q)
            }
        }
    }
}

/// Response maps of one frame for every slot its channel set uses.
#[derive(Debug, Clone)]
pub struct ResponseSet {
    pub width: usize,
    pub height: usize,
    pub orientation_bins: usize,
    pub spread_radius: usize,
    maps: [Option<ResponseMaps>; 4],
    quantized: [Option<QuantizedMap>; 4],
    luts: [ResponseLut; 2],
}

impl ResponseSet {
    pub fn build(cues: &FrameCues, cfg: &MatchConfig) -> Self {
        Self::build_for(cues, cues.channels, cfg)
    }

    /// Restricts to `channels`, which should be a subset of what `cues` holds.
    pub fn build_for(cues: &FrameCues, channels: ChannelSet, cfg: &MatchConfig) -> Self {
        let ori = ResponseLut::new(cfg.orientation_kind());
        let nrm = ResponseLut::new(cfg.normal_kind());
        let pick = |c: Channel, q: &Option<QuantizedMap>| q.clone().filter(|_| channels.contains(c));
        let quantized = [
            pick(Channel::M1, &cues.q_gradient),
            cues.merged_normals(channels, cfg.normal_azimuth_bins),
            pick(Channel::M3, &cues.q_transparency),
            pick(Channel::M4, &cues.q_specular),
        ];
        let maps = std::array::from_fn(|slot| {
            quantized[slot].as_ref().map(|q| {
                let lut = if slot == Slot::Normal as usize { &nrm } else { &ori };
                build_response_maps(&spread(q, cfg.spread), lut)
            })
        });
        Self {
            width: cues.width,
            height: cues.height,
            orientation_bins: cfg.orientation_bins,
            spread_radius: cfg.spread,
            maps,
            quantized,
            luts: [ori, nrm],
        }
    }

    pub fn from_frame(frame: &RgbdFrame, channels: ChannelSet, cfg: &MatchConfig) -> Result<Self> {
        Ok(Self::build(&FrameCues::compute(frame, channels, cfg)?, cfg))
    }

    /// Response plane for a feature, or `None` when its slot was not built.
    #[inline]
    pub fn plane(&self, channel: Channel, bin: u8) -> Option<&[u8]> {
        let (slot, b) = slot_of(channel, bin, self.orientation_bins);
        self.maps[slot as usize].as_ref().map(|m| m.plane(b))
    }

    pub fn quantized(&self, slot: Slot) -> Option<&QuantizedMap> {
        self.quantized[slot as usize].as_ref()
    }

    /// Similarity against the unspread bin at exactly `(x, y)`.
    pub fn exact_similarity(&self, channel: Channel, bin: u8, x: usize, y: usize) -> u8 {
        let (slot, b) = slot_of(channel, bin, self.orientation_bins);
        let Some(q) = &self.quantized[slot as usize] else {
            return 0;
        };
        let observed = q.get(x, y);
        if observed == NO_BIN {
            return 0;
        }
        let lut = if slot == Slot::Normal { &self.luts[1] } else { &self.luts[0] };
        lut.get(b, 1 << observed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_mapping() {
        assert_eq!(slot_of(Channel::M3, 3, 8), (Slot::TransparencyContour, 3));
        assert_eq!(slot_of(Channel::M3, 16, 8), (Slot::Normal, 8));
        assert_eq!(slot_of(Channel::M4, 7, 8), (Slot::SpecularContour, 7));
        let cfg = MatchConfig::default();
        assert_eq!(channel_bins(Channel::M3, &cfg), 17);
        assert_eq!(channel_bins(Channel::M2, &cfg), 9);
    }

    #[test]
    fn only_requested_channels_are_computed() {
        let k = CameraIntrinsics::new(100.0, 100.0, 8.0, 8.0);
        let f = RgbdFrame::filled(16, 16, [50; 3], 900, k);
        let cfg = MatchConfig::default();
        let cues = FrameCues::compute(&f, ChannelSet::BASELINE, &cfg).unwrap();
        assert!(cues.gradients.is_some() && cues.normals.is_some());
        assert!(cues.extruded.is_none() && cues.specular.is_none());
        let rs = ResponseSet::build(&cues, &cfg);
        assert!(rs.plane(Channel::M1, 0).is_some());
        assert!(rs.plane(Channel::M4, 0).is_none());
        // flat wall: every pixel reads 100 for the flat normal bin
        assert!(rs.plane(Channel::M2, 8).unwrap().iter().all(|&v| v == 100));
    }
}
