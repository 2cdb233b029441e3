//! Template extraction, training-time deduplication and the database file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::config::{Fingerprint, MatchConfig};
use crate::cues::{FrameCues, ResponseSet};
use crate::error::{Error, Result};
use crate::frame::RgbdFrame;
use crate::matcher::score_sum;
use crate::modalities::{BinaryMask, Channel, ChannelSet, NormalMap, OrientationMap};
use crate::response::{QuantizedMap, NO_BIN};

pub const DB_MAGIC: [u8; 4] = *b"MFDB";
pub const DB_VERSION: u16 = 1;

/// One template entry: offset from the anchor, channel and bin.
///
/// M3 uses two bin ranges. Bins below the orientation bin count are
/// transparency-contour orientations; the rest are extruded-normal bins
/// shifted by that count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Feature {
    pub x: u16,
    pub y: u16,
    pub channel: Channel,
    pub bin: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub object_id: String,
    pub template_id: u32,
    pub width: usize,
    pub height: usize,
    pub features: Vec<Feature>,
    pub pose_label: String,
}

impl Template {
    pub fn feature_count(&self, channel: Channel) -> usize {
        self.features.iter().filter(|f| f.channel == channel).count()
    }
}

/// A freshly extracted template together with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub template: Template,
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateDb {
    pub fingerprint: Fingerprint,
    pub channels: ChannelSet,
    pub templates: Vec<Template>,
}

impl TemplateDb {
    pub fn new(channels: ChannelSet, cfg: &MatchConfig) -> Self {
        Self {
            fingerprint: cfg.fingerprint(),
            channels,
            templates: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn check_config(&self, cfg: &MatchConfig) -> Result<()> {
        if cfg.fingerprint() != self.fingerprint {
            return Err(Error::Config(format!(
                "database fingerprint {:?} does not match runtime config {:?}",
                self.fingerprint,
                cfg.fingerprint()
            )));
        }
        Ok(())
    }

    /// Appends `template` under the next free id and returns that id.
    pub fn add(&mut self, mut template: Template) -> u32 {
        let id = self.templates.last().map_or(0, |t| t.template_id + 1);
        template.template_id = id;
        self.templates.push(template);
        id
    }

    /// Templates per object id.
    pub fn counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for t in &self.templates {
            *out.entry(t.object_id.clone()).or_insert(0) += 1;
        }
        out
    }

    /// A copy holding only the templates whose object passes `keep`. Ids are
    /// kept, so detections still refer back to the full database.
    pub fn restricted(&self, keep: impl Fn(&str) -> bool) -> TemplateDb {
        TemplateDb {
            templates: self.templates.iter().filter(|t| keep(&t.object_id)).cloned().collect(),
            ..self.clone()
        }
    }

    pub fn get(&self, template_id: u32) -> Option<&Template> {
        self.templates
            .binary_search_by_key(&template_id, |t| t.template_id)
            .ok()
            .map(|i| &self.templates[i])
    }
}

struct Candidate {
    interior: bool,
    magnitude: f32,
    tie: u32,
    x: usize,
    y: usize,
    bin: u8,
}

/// Fixed pixel hash breaking magnitude ties independently of scan order.
fn pixel_hash(x: usize, y: usize) -> u32 {
    let mut h = (x as u64) << 32 | y as u64;
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    (h ^ (h >> 33)) as u32
}

type Region = (usize, usize, usize, usize);

fn orientation_candidates(map: &OrientationMap, q: &QuantizedMap, region: &BinaryMask, mask: &BinaryMask, bb: Region) -> Vec<Candidate> {
    let mut out = Vec::new();
    for y in bb.1..=bb.3 {
        for x in bb.0..=bb.2 {
            let i = y * map.width + x;
            if region.data[i] && map.valid[i] && q.bins[i] != NO_BIN {
                out.push(Candidate {
                    interior: mask.data[i],
                    magnitude: map.magnitude[i],
                    tie: pixel_hash(x, y),
                    x,
                    y,
                    bin: q.bins[i],
                });
            }
        }
    }
    out
}

/// Chebyshev distance from each mask pixel to the nearest pixel outside the
/// mask or beyond the image edge; zero outside.
fn inner_distance(mask: &BinaryMask) -> Vec<u16> {
    let (w, h) = mask.dims();
    let mut d: Vec<u16> = mask.data.iter().map(|&m| if m { u16::MAX } else { 0 }).collect();
    let at = |d: &Vec<u16>, x: isize, y: isize| -> u16 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0
        } else {
            d[y as usize * w + x as usize]
        }
    };
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            if d[i] != 0 {
                let m = [(-1, -1), (0, -1), (1, -1), (-1, 0)]
                    .iter()
                    .map(|&(dx, dy)| at(&d, x + dx, y + dy))
                    .min()
                    .unwrap_or(0);
                d[i] = d[i].min(m.saturating_add(1));
            }
        }
    }
    for y in (0..h as isize).rev() {
        for x in (0..w as isize).rev() {
            let i = y as usize * w + x as usize;
            if d[i] != 0 {
                let m = [(1, 1), (0, 1), (-1, 1), (1, 0)]
                    .iter()
                    .map(|&(dx, dy)| at(&d, x + dx, y + dy))
                    .min()
                    .unwrap_or(0);
                d[i] = d[i].min(m.saturating_add(1));
            }
        }
    }
    d
}

/// Normal candidates ranked by depth into the mask: normals far from the
/// silhouette come from a clean local plane fit.
fn normal_candidates(map: &NormalMap, q: &QuantizedMap, mask: &BinaryMask, bb: Region, offset: u8) -> Vec<Candidate> {
    let depth = inner_distance(mask);
    let mut out = Vec::new();
    for y in bb.1..=bb.3 {
        for x in bb.0..=bb.2 {
            let i = y * map.width + x;
            if mask.data[i] && map.valid[i] && q.bins[i] != NO_BIN {
                out.push(Candidate {
                    interior: true,
                    magnitude: f32::from(depth[i]),
                    tie: pixel_hash(x, y),
                    x,
                    y,
                    bin: q.bins[i] + offset,
                });
            }
        }
    }
    out
}

/// Greedy pick: interior first, then magnitude, keeping `spacing` apart.
fn select(mut cands: Vec<Candidate>, quota: usize, spacing: usize) -> Vec<Candidate> {
    cands.sort_by(|a, b| {
        b.interior
            .cmp(&a.interior)
            .then(b.magnitude.total_cmp(&a.magnitude))
            .then(a.tie.cmp(&b.tie))
    });
    let mut chosen: Vec<Candidate> = Vec::with_capacity(quota);
    for c in cands {
        if chosen.len() >= quota {
            break;
        }
        if chosen.iter().all(|k| c.x.abs_diff(k.x).max(c.y.abs_diff(k.y)) >= spacing) {
            chosen.push(c);
        }
    }
    chosen
}

/// Extracts a template for the object covered by `mask` from precomputed cues.
/// `channels` must be a subset of the channels `cues` was computed for.
pub fn extract_from_cues(
    cues: &FrameCues,
    mask: &BinaryMask,
    channels: ChannelSet,
    cfg: &MatchConfig,
    object_id: &str,
    pose_label: &str,
) -> Result<Extraction> {
    if mask.dims() != (cues.width, cues.height) {
        return Err(Error::DimensionMismatch {
            expected: (cues.width, cues.height),
            actual: mask.dims(),
        });
    }
    if !channels.is_subset_of(cues.channels) {
        return Err(Error::Config(format!(
            "cues hold {} but extraction asked for {}",
            cues.channels, channels
        )));
    }
    let region = mask.dilate(cfg.mask_dilation);
    let bb = region.bounding_box().ok_or(Error::EmptyTemplate)?;
    let k = cfg.k_per_channel;
    let spacing = cfg.feature_spacing;
    let mut picked: Vec<(Channel, Vec<Candidate>)> = Vec::new();

    for channel in channels.iter() {
        let chosen = match channel {
            Channel::M1 => {
                let (m, q) = (cues.gradients.as_ref(), cues.q_gradient.as_ref());
                m.zip(q)
                    .map(|(m, q)| select(orientation_candidates(m, q, &region, mask, bb), k, spacing))
                    .unwrap_or_default()
            }
            Channel::M2 => {
                let (m, q) = (cues.normals.as_ref(), cues.q_normal.as_ref());
                m.zip(q)
                    .map(|(m, q)| select(normal_candidates(m, q, mask, bb, 0), k, spacing))
                    .unwrap_or_default()
            }
            Channel::M3 => {
                let mut both = Vec::new();
                if let (Some(m), Some(q)) = (&cues.transparency_contour, &cues.q_transparency) {
                    both = select(orientation_candidates(m, q, &region, mask, bb), k.div_ceil(2), spacing);
                }
                if let (Some(m), Some(q)) = (&cues.extruded, &cues.q_extruded) {
                    let quota = k - both.len();
                    let offset = cfg.orientation_bins as u8;
                    both.extend(select(normal_candidates(m, q, mask, bb, offset), quota, spacing));
                }
                both
            }
            Channel::M4 => {
                let (m, q) = (cues.specular_contour.as_ref(), cues.q_specular.as_ref());
                m.zip(q)
                    .map(|(m, q)| select(orientation_candidates(m, q, &region, mask, bb), k, spacing))
                    .unwrap_or_default()
            }
        };
        picked.push((channel, chosen));
    }

    let features: Vec<Feature> = picked
        .into_iter()
        .flat_map(|(channel, cands)| {
            cands.into_iter().map(move |c| Feature {
                x: (c.x - bb.0) as u16,
                y: (c.y - bb.1) as u16,
                channel,
                bin: c.bin,
            })
        })
        .collect();
    if features.is_empty() {
        return Err(Error::EmptyTemplate);
    }
    Ok(Extraction {
        template: Template {
            object_id: object_id.to_string(),
            template_id: 0,
            width: bb.2 - bb.0 + 1,
            height: bb.3 - bb.1 + 1,
            features,
            pose_label: pose_label.to_string(),
        },
        x: bb.0,
        y: bb.1,
    })
}

/// Extracts a template from a (stabilized) frame and an object mask.
pub fn extract_template(
    frame: &RgbdFrame,
    mask: &BinaryMask,
    channels: ChannelSet,
    cfg: &MatchConfig,
    object_id: &str,
) -> Result<Extraction> {
    if mask.is_empty() {
        return Err(Error::EmptyTemplate);
    }
    let cues = FrameCues::compute(frame, channels, cfg)?;
    extract_from_cues(&cues, mask, channels, cfg, object_id, "")
}

/// True when a stored template of the same object already scores at least
/// `tau_dup` on the candidate's source frame at the candidate's anchor.
pub fn is_duplicate_in(candidate: &Extraction, db: &TemplateDb, responses: &ResponseSet, tau_dup: f64) -> bool {
    db.templates
        .iter()
        .filter(|t| t.object_id == candidate.template.object_id)
        .any(|t| {
            score_sum(t, responses, candidate.x, candidate.y)
                .is_some_and(|sum| f64::from(sum) >= tau_dup * t.features.len() as f64)
        })
}

pub fn is_duplicate(candidate: &Extraction, db: &TemplateDb, source_frame: &RgbdFrame, cfg: &MatchConfig) -> Result<bool> {
    db.check_config(cfg)?;
    if db.is_empty() {
        return Ok(false);
    }
    let responses = ResponseSet::from_frame(source_frame, db.channels, cfg)?;
    Ok(is_duplicate_in(candidate, db, &responses, cfg.tau_dup))
}

#[derive(Debug, Clone)]
pub struct TrainingView {
    pub frame: RgbdFrame,
    pub mask: BinaryMask,
    pub object_id: String,
    pub pose_label: String,
}

#[derive(Debug, Default)]
pub struct TrainReport {
    pub added: usize,
    pub duplicates: usize,
    pub failures: Vec<(usize, Error)>,
}

/// Adds one view given its cues; returns whether a template was stored.
pub fn train_view_with_cues(
    db: &mut TemplateDb,
    cues: &FrameCues,
    mask: &BinaryMask,
    object_id: &str,
    pose_label: &str,
    cfg: &MatchConfig,
) -> Result<bool> {
    let ex = extract_from_cues(cues, mask, db.channels, cfg, object_id, pose_label)?;
    if db.templates.iter().any(|t| t.object_id == object_id) {
        let responses = ResponseSet::build_for(cues, db.channels, cfg);
        if is_duplicate_in(&ex, db, &responses, cfg.tau_dup) {
            return Ok(false);
        }
    }
    db.add(ex.template);
    Ok(true)
}

/// Extracts and adds each view in order unless it duplicates a stored one.
/// Per-view failures are logged and collected; training continues.
pub fn train_from_views<'a>(
    db: &mut TemplateDb,
    views: impl IntoIterator<Item = &'a TrainingView>,
    cfg: &MatchConfig,
) -> Result<TrainReport> {
    db.check_config(cfg)?;
    let mut report = TrainReport::default();
    for (i, view) in views.into_iter().enumerate() {
        let outcome = FrameCues::compute(&view.frame, db.channels, cfg)
            .and_then(|cues| train_view_with_cues(db, &cues, &view.mask, &view.object_id, &view.pose_label, cfg));
        match outcome {
            Ok(true) => report.added += 1,
            Ok(false) => report.duplicates += 1,
            Err(e) => {
                log::warn!("view {i} ({}): {e}", view.object_id);
                report.failures.push((i, e));
            }
        }
    }
    Ok(report)
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

fn narrow<T: TryFrom<usize>>(v: usize, what: &str) -> Result<T> {
    T::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit the file format")))
}

pub fn encode_db(db: &TemplateDb) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&DB_MAGIC);
    w.u16(DB_VERSION);
    let fp = &db.fingerprint;
    w.u8(fp.orientation_bins);
    w.u8(fp.normal_bins);
    w.u8(fp.spread);
    w.u32(fp.tau_mag.to_bits());
    w.u8(fp.specular_threshold);
    w.u16(fp.k_per_channel);
    w.u8(db.channels.bits());
    w.u32(narrow(db.templates.len(), "template count")?);
    for t in &db.templates {
        w.u16(narrow(t.object_id.len(), "object id length")?);
        w.0.extend_from_slice(t.object_id.as_bytes());
        w.u32(t.template_id);
        w.u16(narrow(t.width, "template width")?);
        w.u16(narrow(t.height, "template height")?);
        w.u16(narrow(t.features.len(), "feature count")?);
        for f in &t.features {
            w.u16(f.x);
            w.u16(f.y);
            w.u8(f.channel.index() as u8);
            w.u8(f.bin);
        }
    }
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    Ok(w.0)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(Error::Truncated)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_db(bytes: &[u8]) -> Result<TemplateDb> {
    if bytes.len() < 6 {
        return Err(Error::Truncated);
    }
    if bytes[..4] != DB_MAGIC {
        return Err(Error::Format("not a template database (bad magic)".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != DB_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if bytes.len() < 10 {
        return Err(Error::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader { buf: body, pos: 6 };
    let fingerprint = Fingerprint {
        orientation_bins: r.u8()?,
        normal_bins: r.u8()?,
        spread: r.u8()?,
        tau_mag: f32::from_bits(r.u32()?),
        specular_threshold: r.u8()?,
        k_per_channel: r.u16()?,
    };
    let channels = ChannelSet::from_bits(r.u8()?).ok_or_else(|| Error::Format("bad channel mask".into()))?;
    let count = r.u32()? as usize;
    let mut templates = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let object_id = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|e| Error::Format(format!("object id is not UTF-8: {e}")))?;
        let template_id = r.u32()?;
        let width = r.u16()? as usize;
        let height = r.u16()? as usize;
        let n = r.u16()? as usize;
        let mut features = Vec::with_capacity(n);
        for _ in 0..n {
            let x = r.u16()?;
            let y = r.u16()?;
            let channel = Channel::from_index(r.u8()?).ok_or_else(|| Error::Format("bad channel id".into()))?;
            let bin = r.u8()?;
            if x as usize >= width || y as usize >= height {
                return Err(Error::Format(format!("feature ({x},{y}) outside {width}x{height} template")));
            }
            features.push(Feature { x, y, channel, bin });
        }
        templates.push(Template {
            object_id,
            template_id,
            width,
            height,
            features,
            pose_label: String::new(),
        });
    }
    if r.pos != body.len() {
        return Err(Error::Format(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(TemplateDb {
        fingerprint,
        channels,
        templates,
    })
}

pub fn save_db(db: &TemplateDb, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_db(db)?).map_err(|e| Error::io(path, e))
}

pub fn load_db(path: impl AsRef<Path>) -> Result<TemplateDb> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_db(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_distance_counts_rings() {
        let m = BinaryMask::from_fn(7, 5, |x, y| (1..6).contains(&x) && (0..5).contains(&y));
        let d = inner_distance(&m);
        let row: Vec<u16> = (0..7).map(|x| d[2 * 7 + x]).collect();
        assert_eq!(row, vec![0, 1, 2, 3, 2, 1, 0]);
        // the image edge counts as outside
        assert_eq!(d[3], 1);
    }
    use crate::frame::CameraIntrinsics;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(200.0, 200.0, 32.0, 24.0)
    }

    /// A bright textured square on a tilted backdrop, all depth valid.
    fn box_scene() -> (RgbdFrame, BinaryMask) {
        let (w, h) = (64, 48);
        let inside = |x: usize, y: usize| (20..40).contains(&x) && (12..34).contains(&y);
        let rgb = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                if inside(x, y) {
                    if (x / 4 + y / 4) % 2 == 0 {
                        [220, 40, 40]
                    } else {
                        [40, 40, 220]
                    }
                } else {
                    [90, 90, 90]
                }
            })
            .collect();
        let depth = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                if inside(x, y) {
                    700 + (x as u16) * 3
                } else {
                    1200
                }
            })
            .collect();
        (RgbdFrame::new(w, h, rgb, depth, k()).unwrap(), BinaryMask::from_fn(w, h, inside))
    }

    #[test]
    fn textured_box_has_no_m3_m4_features() {
        let (f, mask) = box_scene();
        let cfg = MatchConfig::default();
        let ex = extract_template(&f, &mask, ChannelSet::ALL, &cfg, "box").unwrap();
        let t = &ex.template;
        assert!(t.feature_count(Channel::M1) > 0 && t.feature_count(Channel::M2) > 0);
        assert_eq!(t.feature_count(Channel::M3) + t.feature_count(Channel::M4), 0);
        assert!(t.features.len() <= 2 * cfg.k_per_channel);
        assert_eq!((ex.x, ex.y), (18, 10));
        for ft in &t.features {
            assert!((ft.x as usize) < t.width && (ft.y as usize) < t.height);
        }
    }

    #[test]
    fn features_respect_spacing() {
        let (f, mask) = box_scene();
        let t = extract_template(&f, &mask, ChannelSet::ALL, &MatchConfig::default(), "box").unwrap().template;
        for a in &t.features {
            for b in &t.features {
                if a != b && a.channel == b.channel {
                    assert!(a.x.abs_diff(b.x).max(a.y.abs_diff(b.y)) >= 5);
                }
            }
        }
    }

    #[test]
    fn empty_inputs_give_empty_template() {
        let (f, _) = box_scene();
        let cfg = MatchConfig::default();
        let none = BinaryMask::new(64, 48);
        assert!(matches!(extract_template(&f, &none, ChannelSet::ALL, &cfg, "x"), Err(Error::EmptyTemplate)));
        // a patch of uniform flat backdrop has no usable cue for M1 or M4
        let flat = BinaryMask::from_fn(64, 48, |x, y| x < 8 && y < 8);
        let only = "m1,m4".parse().unwrap();
        assert!(matches!(extract_template(&f, &flat, only, &cfg, "x"), Err(Error::EmptyTemplate)));
    }

    #[test]
    fn dedup_on_repeated_view() {
        let (f, mask) = box_scene();
        let cfg = MatchConfig::default();
        let mut db = TemplateDb::new(ChannelSet::BASELINE, &cfg);
        let ex = extract_template(&f, &mask, db.channels, &cfg, "box").unwrap();
        assert!(!is_duplicate(&ex, &db, &f, &cfg).unwrap());
        let view = TrainingView {
            frame: f.clone(),
            mask: mask.clone(),
            object_id: "box".into(),
            pose_label: "p0".into(),
        };
        let views = vec![view; 50];
        let report = train_from_views(&mut db, &views, &cfg).unwrap();
        assert_eq!((report.added, report.duplicates), (1, 49));
        assert!(is_duplicate(&ex, &db, &f, &cfg).unwrap());
        train_from_views(&mut db, &views, &cfg).unwrap();
        assert_eq!(db.len(), 1);
        let other = MatchConfig {
            orientation_bins: 6,
            ..cfg
        };
        assert!(is_duplicate(&ex, &db, &f, &other).is_err());
    }

    #[test]
    fn db_round_trip_and_corruption() {
        let (f, mask) = box_scene();
        let cfg = MatchConfig::default();
        let mut db = TemplateDb::new(ChannelSet::ALL, &cfg);
        db.add(extract_template(&f, &mask, db.channels, &cfg, "box").unwrap().template);
        db.add(extract_template(&f, &mask, db.channels, &cfg, "b\u{f6}x").unwrap().template);
        let bytes = encode_db(&db).unwrap();
        assert_eq!(&bytes[..4], b"MFDB");
        assert_eq!(decode_db(&bytes).unwrap(), db);

        let mut bad = bytes.clone();
        bad[20] ^= 0x40;
        assert!(matches!(decode_db(&bad), Err(Error::Checksum { .. })));
        assert!(matches!(decode_db(&bytes[..5]), Err(Error::Truncated)));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(decode_db(&v2), Err(Error::UnsupportedVersion(2))));

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("db.mfdb");
        save_db(&db, &p).unwrap();
        assert_eq!(load_db(&p).unwrap(), db);
    }

    #[test]
    fn ids_are_sequential() {
        let cfg = MatchConfig::default();
        let mut db = TemplateDb::new(ChannelSet::ALL, &cfg);
        let t = Template {
            object_id: "a".into(),
            template_id: 99,
            width: 1,
            height: 1,
            features: vec![Feature { x: 0, y: 0, channel: Channel::M1, bin: 0 }],
            pose_label: String::new(),
        };
        assert_eq!(db.add(t.clone()), 0);
        assert_eq!(db.add(t), 1);
        assert_eq!(db.get(1).unwrap().template_id, 1);
    }
}
