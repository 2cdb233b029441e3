//! Evaluation harness on synthetic tabletop data.
//!
//! The protocol trains every catalog object from a few table stations and a
//! ring of rotations, then runs recognition trials at random poses around the
//! stations. A trial counts as recognized at threshold `t` when some kept
//! detection of at least `t` names the right object and localizes it within
//! [`TP_RADIUS_M`] of the true centroid. False positives are counted per
//! trial: a trial is a false positive at `t` when any other kept detection
//! reaches `t`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::MatchConfig;
use crate::cues::{FrameCues, ResponseSet};
use crate::error::{Error, Result};
use crate::frame::{Point3, RgbdFrame};
use crate::localization::locate;
use crate::matcher::{detect_with_responses, score, Detection};
use crate::modalities::{BinaryMask, ChannelSet};
use crate::preprocess::stabilize;
use crate::synth::{derive_seed, render_clean, Category, GroundTruth, ObjectSpec, SceneSpec, Shape};
use crate::templates::{train_view_with_cues, TemplateDb};

/// A detection is a true positive only within this centroid distance (m).
pub const TP_RADIUS_M: f64 = 0.05;

pub const DEFAULT_TRIALS_PER_OBJECT: usize = 25;

/// Three objects per category.
pub fn standard_catalog() -> Vec<ObjectSpec> {
    let cyl = |radius, height| Shape::Cylinder { radius, height };
    let glass = |bottom_radius, top_radius, height| Shape::Glass {
        bottom_radius,
        top_radius,
        height,
    };
    let mut out = Vec::new();
    let mut add = |id: &str, category, shape, seed: u64, f: &dyn Fn(&mut ObjectSpec)| {
        let mut o = ObjectSpec::new(id, category, shape, 0.0, 0.0);
        o.texture_seed = seed;
        f(&mut o);
        out.push(o);
    };
    use Category::*;
    add(
        "cereal_box",
        Diffuse,
        Shape::Box {
            width: 0.09,
            depth: 0.045,
            height: 0.15,
        },
        101,
        &|_| {},
    );
    add("soup_can", Diffuse, cyl(0.034, 0.1), 102, &|_| {});
    add(
        "tea_box",
        Diffuse,
        Shape::Box {
            width: 0.14,
            depth: 0.08,
            height: 0.06,
        },
        103,
        &|o| o.white_cap = true,
    );
    add("tumbler", Transparent, glass(0.03, 0.038, 0.08), 0, &|o| o.highlights = 2);
    add("wine_glass", Transparent, glass(0.02, 0.03, 0.12), 0, &|o| o.highlights = 2);
    add("jar", Transparent, cyl(0.036, 0.1), 0, &|o| o.highlights = 2);
    add("water_bottle", Composite, cyl(0.03, 0.14), 201, &|o| o.band = (0.55, 0.75));
    add("juice_bottle", Composite, glass(0.038, 0.032, 0.12), 202, &|o| o.band = (0.5, 0.75));
    add("oil_flask", Composite, glass(0.025, 0.035, 0.1), 203, &|o| o.band = (0.5, 0.8));
    out
}

/// Training and trial recipe.
#[derive(Debug, Clone)]
pub struct Protocol {
    /// Camera, table, light and noise shared by every scene.
    pub base: SceneSpec,
    /// Table positions `(x, z)` used for training.
    pub stations: Vec<(f64, f64)>,
    /// Training rotations per station.
    pub rotations: usize,
    pub trials_per_object: usize,
    /// Uniform trial offsets around a station, `(x, z)` half-widths (m).
    pub jitter: (f64, f64),
    /// Give every trial its own table pattern instead of the training one.
    pub fresh_backgrounds: bool,
    pub seed: u64,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            base: SceneSpec::default(),
            stations: (0..5).map(|i| (0.0, 0.5 + 0.06 * i as f64)).collect(),
            rotations: 16,
            trials_per_object: DEFAULT_TRIALS_PER_OBJECT,
            jitter: (0.01, 0.01),
            fresh_backgrounds: true,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub trial_id: usize,
    pub object_index: usize,
    pub spec: SceneSpec,
}

impl Protocol {
    fn place(&self, obj: &ObjectSpec, x: f64, z: f64, rotation: f64, seed: u64) -> SceneSpec {
        let mut o = obj.clone();
        o.x = x;
        o.z = z;
        o.rotation = rotation;
        SceneSpec {
            objects: vec![o],
            seed,
            ..self.base.clone()
        }
    }

    /// Scenes for every station and rotation of `obj`, station-major.
    pub fn training_specs(&self, obj: &ObjectSpec) -> Vec<SceneSpec> {
        let r = self.rotations.max(1);
        let mut out = Vec::with_capacity(self.stations.len() * r);
        for (s, &(x, z)) in self.stations.iter().enumerate() {
            for k in 0..r {
                let rot = std::f64::consts::TAU * k as f64 / r as f64;
                let seed = derive_seed(self.seed, (s * r + k) as u64 ^ hash_id(&obj.id));
                out.push(self.place(obj, x, z, rot, seed));
            }
        }
        out
    }

    /// `trials_per_object` random poses per object, drawn from `seed`.
    pub fn trials(&self, catalog: &[ObjectSpec]) -> Vec<Trial> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, 0x7121a1));
        let mut out = Vec::new();
        for (oi, obj) in catalog.iter().enumerate() {
            for _ in 0..self.trials_per_object {
                let (sx, sz) = self.stations[rng.random_range(0..self.stations.len())];
                let x = sx + rng.random_range(-1.0..=1.0) * self.jitter.0;
                let z = sz + rng.random_range(-1.0..=1.0) * self.jitter.1;
                let rot = rng.random_range(0.0..std::f64::consts::TAU);
                let trial_id = out.len();
                let seed = derive_seed(self.seed ^ 0xa5a5, trial_id as u64);
                let mut spec = self.place(obj, x, z, rot, seed);
                if self.fresh_backgrounds {
                    spec.table.texture_seed = derive_seed(seed, 0xb6);
                }
                out.push(Trial {
                    trial_id,
                    object_index: oi,
                    spec,
                });
            }
        }
        out
    }
}

fn hash_id(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

/// A rendered scene after temporal stabilization.
#[derive(Debug, Clone)]
pub struct Observation {
    pub frame: RgbdFrame,
    pub truth: GroundTruth,
}

/// Renders `spec.frames` frames and stabilizes them into one.
pub fn observe(spec: &SceneSpec) -> Result<Observation> {
    let clean = render_clean(spec)?;
    let frames: Vec<RgbdFrame> = (0..spec.frames).map(|k| clean.frame(&spec.noise, spec.seed, k)).collect();
    Ok(Observation {
        frame: stabilize(&frames)?,
        truth: clean.truth,
    })
}

/// Outcome of scoring a freshly stored template on its own source view.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheck {
    pub channels: ChannelSet,
    pub template_id: u32,
    pub object_id: String,
    pub score: f64,
    /// Whether detection with only this template at the default threshold
    /// returns it first, at its source anchor.
    pub top_detection: bool,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    /// One database per requested channel set, in request order.
    pub dbs: Vec<TemplateDb>,
    /// Views offered per object.
    pub views: BTreeMap<String, usize>,
    pub self_checks: Vec<SelfCheck>,
    pub failures: usize,
}

/// Trains one database per channel set from the protocol's views of every
/// catalog object. Each view is rendered and its cues computed once for the
/// union of `sets`.
pub fn train_catalog(
    protocol: &Protocol,
    catalog: &[ObjectSpec],
    sets: &[ChannelSet],
    cfg: &MatchConfig,
    self_check: bool,
) -> Result<TrainingOutcome> {
    let union = sets.iter().fold(ChannelSet::new(&[]), |a, s| ChannelSet::from_bits(a.bits() | s.bits()).expect("valid bits"));
    let mut dbs: Vec<TemplateDb> = sets.iter().map(|&s| TemplateDb::new(s, cfg)).collect();
    let mut out = TrainingOutcome {
        dbs: Vec::new(),
        views: BTreeMap::new(),
        self_checks: Vec::new(),
        failures: 0,
    };
    for obj in catalog {
        let specs = protocol.training_specs(obj);
        out.views.insert(obj.id.clone(), specs.len());
        for (vi, spec) in specs.iter().enumerate() {
            let obs = observe(spec)?;
            let cues = FrameCues::compute(&obs.frame, union, cfg)?;
            let mask = &obs.truth.objects[0].silhouette;
            for db in dbs.iter_mut() {
                let label = format!("{}/{vi}", obj.id);
                match train_view_with_cues(db, &cues, mask, &obj.id, &label, cfg) {
                    Ok(true) if self_check => {
                        out.self_checks.push(check_self(db, &cues, mask, cfg)?);
                    }
                    Ok(_) => {}
                    Err(e) => {
                        log::warn!("{} view {vi} ({}): {e}", obj.id, db.channels);
                        out.failures += 1;
                    }
                }
            }
        }
    }
    out.dbs = dbs;
    Ok(out)
}

fn check_self(db: &TemplateDb, cues: &FrameCues, mask: &BinaryMask, cfg: &MatchConfig) -> Result<SelfCheck> {
    let t = db.templates.last().expect("just added");
    let region = mask.dilate(cfg.mask_dilation);
    let (x, y, _, _) = region.bounding_box().ok_or(Error::EmptyTemplate)?;
    let responses = ResponseSet::build_for(cues, db.channels, cfg);
    let s = score(t, &responses, x, y)?;
    let single = TemplateDb {
        fingerprint: db.fingerprint,
        channels: db.channels,
        templates: vec![t.clone()],
    };
    let dets = detect_with_responses(&responses, &single, crate::config::DEFAULT_THRESHOLD, 1, cfg.nms_radius);
    let top = dets
        .first()
        .is_some_and(|d| d.template_id == t.template_id && (d.x, d.y) == (x, y) && d.similarity == 100.0);
    Ok(SelfCheck {
        channels: db.channels,
        template_id: t.template_id,
        object_id: t.object_id.clone(),
        score: s,
        top_detection: top,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub detection: Detection,
    /// Estimated centroid, `None` when localization failed.
    pub location: Option<Point3>,
    pub error_m: Option<f64>,
    pub true_positive: bool,
}

/// True positive rule: right object and centroid within `radius` meters.
pub fn is_true_positive(
    detected_object: &str,
    estimate: Option<&Point3>,
    true_object: &str,
    true_centroid: &Point3,
    radius: f64,
) -> bool {
    detected_object == true_object && estimate.is_some_and(|p| p.distance(true_centroid) <= radius)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial_id: usize,
    pub object_id: String,
    pub category: Category,
    pub centroid: Point3,
    pub channels: ChannelSet,
    /// Kept detections at threshold 0, best first.
    pub detections: Vec<DetectionRecord>,
    pub seconds: f64,
}

impl TrialResult {
    /// Suppression is consistent across thresholds, so the kept set at `t`
    /// is exactly the records with similarity of at least `t`.
    pub fn best_tp(&self) -> Option<f64> {
        self.detections
            .iter()
            .filter(|d| d.true_positive)
            .map(|d| d.detection.similarity)
            .max_by(f64::total_cmp)
    }

    pub fn best_fp(&self) -> Option<f64> {
        self.detections
            .iter()
            .filter(|d| !d.true_positive)
            .map(|d| d.detection.similarity)
            .max_by(f64::total_cmp)
    }

    pub fn recognized_at(&self, threshold: f64) -> bool {
        self.best_tp().is_some_and(|s| s >= threshold)
    }

    pub fn false_positive_at(&self, threshold: f64) -> bool {
        self.best_fp().is_some_and(|s| s >= threshold)
    }
}

/// Detects and localizes against each database on one observation.
pub fn evaluate_observation(
    obs: &Observation,
    target: usize,
    trial_id: usize,
    dbs: &[TemplateDb],
    cfg: &MatchConfig,
) -> Result<Vec<TrialResult>> {
    let union = dbs.iter().fold(0u8, |a, d| a | d.channels.bits());
    let union = ChannelSet::from_bits(union).expect("valid bits");
    let truth = obs.truth.objects.get(target).ok_or_else(|| Error::Eval(format!("no object {target} in truth")))?;
    let start = Instant::now();
    let cues = FrameCues::compute(&obs.frame, union, cfg)?;
    let shared = start.elapsed().as_secs_f64();
    let (w, h) = obs.frame.dims();
    dbs.iter()
        .map(|db| {
            db.check_config(cfg)?;
            let t0 = Instant::now();
            let responses = ResponseSet::build_for(&cues, db.channels, cfg);
            let dets = detect_with_responses(&responses, db, 0.0, 1, cfg.nms_radius);
            let seconds = shared + t0.elapsed().as_secs_f64();
            let detections = dets
                .into_iter()
                .map(|d| {
                    let t = db.get(d.template_id).expect("detected template exists");
                    let location = locate(&d, t, &cues.filled_depth, w, h, &obs.frame.intrinsics)
                        .ok()
                        .map(|l| l.centroid);
                    let error_m = location.map(|p| p.distance(&truth.centroid));
                    let true_positive =
                        is_true_positive(&d.object_id, location.as_ref(), &truth.object_id, &truth.centroid, TP_RADIUS_M);
                    DetectionRecord {
                        detection: d,
                        location,
                        error_m,
                        true_positive,
                    }
                })
                .collect();
            Ok(TrialResult {
                trial_id,
                object_id: truth.object_id.clone(),
                category: truth.category,
                centroid: truth.centroid,
                channels: db.channels,
                detections,
                seconds,
            })
        })
        .collect()
}

/// Runs every trial against every database. Returns results per database,
/// sorted by trial id.
pub fn run_trials(trials: &[Trial], dbs: &[TemplateDb], cfg: &MatchConfig) -> Result<Vec<Vec<TrialResult>>> {
    let mut out: Vec<Vec<TrialResult>> = vec![Vec::with_capacity(trials.len()); dbs.len()];
    for trial in trials {
        let obs = observe(&trial.spec)?;
        for (i, r) in evaluate_observation(&obs, 0, trial.trial_id, dbs, cfg)?.into_iter().enumerate() {
            out[i].push(r);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: u8,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub channels: ChannelSet,
    /// Thresholds 0 to 100 in order.
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn from_trials(trials: &[TrialResult]) -> Result<Self> {
        let first = trials.first().ok_or_else(|| Error::Eval("no trials".into()))?;
        let n = trials.len() as f64;
        let points = (0..=100u8)
            .map(|t| {
                let th = f64::from(t);
                RocPoint {
                    threshold: t,
                    tpr: trials.iter().filter(|r| r.recognized_at(th)).count() as f64 / n,
                    fpr: trials.iter().filter(|r| r.false_positive_at(th)).count() as f64 / n,
                }
            })
            .collect();
        Ok(Self {
            channels: first.channels,
            points,
        })
    }

    pub fn at(&self, threshold: u8) -> RocPoint {
        self.points[threshold as usize]
    }

    /// Best true positive rate among operating points with at most `fpr`.
    pub fn tpr_within(&self, fpr: f64) -> Option<f64> {
        self.points
            .iter()
            .filter(|p| p.fpr <= fpr)
            .map(|p| p.tpr)
            .max_by(f64::total_cmp)
    }

    /// True when for every operating point of `other` this curve reaches at
    /// least the same true positive rate at no higher false positive rate.
    pub fn dominates(&self, other: &RocCurve) -> bool {
        other
            .points
            .iter()
            .all(|p| self.tpr_within(p.fpr).is_some_and(|t| t >= p.tpr))
    }
}

/// Fraction of trials recognized at `threshold`; zero for no trials.
pub fn recognition_rate(trials: &[TrialResult], threshold: f64) -> f64 {
    if trials.is_empty() {
        return 0.0;
    }
    trials.iter().filter(|t| t.recognized_at(threshold)).count() as f64 / trials.len() as f64
}

pub fn of_category(trials: &[TrialResult], category: Category) -> Vec<TrialResult> {
    trials.iter().filter(|t| t.category == category).cloned().collect()
}

/// Templates per object and channel set, one row per object.
pub fn counts_csv(dbs: &[TemplateDb]) -> String {
    let mut objects: Vec<String> = Vec::new();
    for db in dbs {
        for t in &db.templates {
            if !objects.contains(&t.object_id) {
                objects.push(t.object_id.clone());
            }
        }
    }
    let mut s = String::from("object");
    for db in dbs {
        let _ = write!(s, ",{}", db.channels.label());
    }
    s.push('\n');
    let counts: Vec<BTreeMap<String, usize>> = dbs.iter().map(TemplateDb::counts).collect();
    for o in &objects {
        s.push_str(o);
        for c in &counts {
            let _ = write!(s, ",{}", c.get(o).copied().unwrap_or(0));
        }
        s.push('\n');
    }
    s.push_str("total");
    for db in dbs {
        let _ = write!(s, ",{}", db.len());
    }
    s.push('\n');
    s
}

pub fn roc_csv(curves: &[RocCurve]) -> String {
    let mut s = String::from("channels,threshold,tpr,fpr\n");
    for c in curves {
        for p in &c.points {
            let _ = writeln!(s, "{},{},{:.4},{:.4}", c.channels.label(), p.threshold, p.tpr, p.fpr);
        }
    }
    s
}

/// Recognition rates at `threshold` per channel set, for all trials and for
/// the diffuse ones.
pub fn rates_csv(results: &[Vec<TrialResult>], threshold: f64) -> String {
    let mut s = String::from("channels,all,diffuse,transparent,composite,trials\n");
    for r in results {
        let Some(first) = r.first() else { continue };
        let rate = |c: Category| recognition_rate(&of_category(r, c), threshold);
        let _ = writeln!(
            s,
            "{},{:.4},{:.4},{:.4},{:.4},{}",
            first.channels.label(),
            recognition_rate(r, threshold),
            rate(Category::Diffuse),
            rate(Category::Transparent),
            rate(Category::Composite),
            r.len()
        );
    }
    s
}

/// One row per trial and channel set with the deciding similarities.
pub fn trials_csv(results: &[Vec<TrialResult>]) -> String {
    let mut s = String::from("trial,object,category,channels,best_tp,best_fp,top_object,top_similarity,top_error_m\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_default();
    for r in results {
        for t in r {
            let top = t.detections.first();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                t.trial_id,
                t.object_id,
                t.category,
                t.channels.label(),
                opt(t.best_tp()),
                opt(t.best_fp()),
                top.map(|d| d.detection.object_id.as_str()).unwrap_or(""),
                opt(top.map(|d| d.detection.similarity)),
                top.and_then(|d| d.error_m).map(|e| format!("{e:.4}")).unwrap_or_default(),
            );
        }
    }
    s
}

pub fn timing_csv(rows: &[(ChannelSet, usize, f64)]) -> String {
    let mut s = String::from("channels,templates,mean_seconds\n");
    for (c, n, t) in rows {
        let _ = writeln!(s, "{},{},{:.6}", c.label(), n, t);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(sim: f64, tp: bool) -> DetectionRecord {
        DetectionRecord {
            detection: Detection {
                object_id: "a".into(),
                template_id: 1,
                x: 0,
                y: 0,
                similarity: sim,
                alignment: sim,
            },
            location: None,
            error_m: None,
            true_positive: tp,
        }
    }

    fn trial(records: Vec<DetectionRecord>) -> TrialResult {
        TrialResult {
            trial_id: 0,
            object_id: "a".into(),
            category: Category::Diffuse,
            centroid: Point3::default(),
            channels: ChannelSet::ALL,
            detections: records,
            seconds: 0.0,
        }
    }

    #[test]
    fn tp_rule_needs_name_and_distance() {
        let c = Point3::new(0.0, 0.0, 1.0);
        let near = Point3::new(0.03, 0.0, 1.03);
        let far = Point3::new(0.0, 0.0, 1.0501);
        assert!(is_true_positive("a", Some(&near), "a", &c, TP_RADIUS_M));
        assert!(!is_true_positive("b", Some(&near), "a", &c, TP_RADIUS_M));
        assert!(!is_true_positive("a", Some(&far), "a", &c, TP_RADIUS_M));
        assert!(!is_true_positive("a", None, "a", &c, TP_RADIUS_M));
        let o = Point3::default();
        let edge = Point3::new(0.0, 0.0, 0.05);
        assert!(is_true_positive("a", Some(&edge), "a", &o, TP_RADIUS_M));
    }

    #[test]
    fn roc_is_monotone_and_thresholded() {
        let trials = vec![
            trial(vec![record(90.0, true), record(60.0, false)]),
            trial(vec![record(80.0, false), record(70.0, true)]),
            trial(vec![]),
        ];
        let roc = RocCurve::from_trials(&trials).unwrap();
        assert_eq!(roc.points.len(), 101);
        assert_eq!(roc.at(0).tpr, 2.0 / 3.0);
        assert_eq!(roc.at(75).tpr, 1.0 / 3.0);
        assert_eq!(roc.at(75).fpr, 1.0 / 3.0);
        assert_eq!(roc.at(91).tpr, 0.0);
        for w in roc.points.windows(2) {
            assert!(w[1].tpr <= w[0].tpr && w[1].fpr <= w[0].fpr);
        }
        assert!(RocCurve::from_trials(&[]).is_err());
        assert!(roc.dominates(&roc));
    }

    #[test]
    fn dominance_is_pointwise() {
        let mk = |pts: &[(f64, f64)]| RocCurve {
            channels: ChannelSet::ALL,
            points: pts
                .iter()
                .enumerate()
                .map(|(i, &(tpr, fpr))| RocPoint {
                    threshold: i as u8,
                    tpr,
                    fpr,
                })
                .collect(),
        };
        let good = mk(&[(1.0, 1.0), (0.9, 0.1), (0.0, 0.0)]);
        let bad = mk(&[(1.0, 1.0), (0.5, 0.2), (0.0, 0.0)]);
        assert!(good.dominates(&bad));
        assert!(!bad.dominates(&good));
    }

    #[test]
    fn trials_are_reproducible() {
        let p = Protocol {
            trials_per_object: 3,
            ..Protocol::default()
        };
        let cat = standard_catalog();
        let a = p.trials(&cat);
        let b = p.trials(&cat);
        assert_eq!(a.len(), 27);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.spec, y.spec);
        }
        assert_eq!(p.training_specs(&cat[0]).len(), 5 * p.rotations);
    }

    #[test]
    fn catalog_renders_at_every_station() {
        let p = Protocol::default();
        for obj in standard_catalog() {
            for &(x, z) in &p.stations {
                let spec = p.place(&obj, x, z, 0.3, 1);
                let clean = render_clean(&spec).unwrap();
                assert!(clean.truth.objects[0].silhouette.count() > 300, "{} at {z}", obj.id);
            }
        }
    }
}
