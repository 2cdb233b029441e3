//! Sliding-window template scoring, thresholding and non-maximum suppression.
//!
//! For each template every feature adds one contiguous row slice of its
//! response plane into an accumulator per anchor row, so the inner loop is a
//! widening byte-to-word add that the compiler vectorizes. Only the best
//! template per anchor survives into the candidate list.

use std::cmp::Ordering;
use std::time::Instant;

use crate::config::MatchConfig;
use crate::cues::ResponseSet;
use crate::error::{Error, Result};
use crate::frame::RgbdFrame;
use crate::templates::{Template, TemplateDb};

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub object_id: String,
    pub template_id: u32,
    pub x: usize,
    pub y: usize,
    /// Percent in `[0, 100]`.
    pub similarity: f64,
    /// Score without spreading, used only to order equal similarities.
    pub alignment: f64,
}

/// Total of the feature responses at anchor `(x, y)`, or `None` if the
/// template does not fit there. Features whose slot is missing add zero.
pub fn score_sum(template: &Template, responses: &ResponseSet, x: usize, y: usize) -> Option<u32> {
    let (w, h) = (responses.width, responses.height);
    if x + template.width > w || y + template.height > h {
        return None;
    }
    let mut sum = 0u32;
    for f in &template.features {
        if let Some(plane) = responses.plane(f.channel, f.bin) {
            sum += u32::from(plane[(y + f.y as usize) * w + x + f.x as usize]);
        }
    }
    Some(sum)
}

/// Similarity in percent of `template` anchored at `(x, y)`.
pub fn score(template: &Template, responses: &ResponseSet, x: usize, y: usize) -> Result<f64> {
    if template.features.is_empty() {
        return Err(Error::EmptyTemplate);
    }
    let sum = score_sum(template, responses, x, y).ok_or(Error::OutOfBounds { x, y })?;
    Ok(f64::from(sum) / template.features.len() as f64)
}

fn alignment(template: &Template, responses: &ResponseSet, x: usize, y: usize) -> f64 {
    let sum: u32 = template
        .features
        .iter()
        .map(|f| u32::from(responses.exact_similarity(f.channel, f.bin, x + f.x as usize, y + f.y as usize)))
        .sum();
    f64::from(sum) / template.features.len().max(1) as f64
}

/// Deterministic detection order: similarity, then template id, then
/// unspread alignment, then position.
pub fn rank(a: &Detection, b: &Detection) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then(a.template_id.cmp(&b.template_id))
        .then(b.alignment.total_cmp(&a.alignment))
        .then(a.y.cmp(&b.y))
        .then(a.x.cmp(&b.x))
}

trait Acc: Copy + Default + Into<u32> {
    fn add_u8(&mut self, v: u8);
}

impl Acc for u16 {
    #[inline(always)]
    fn add_u8(&mut self, v: u8) {
        *self += u16::from(v);
    }
}

impl Acc for u32 {
    #[inline(always)]
    fn add_u8(&mut self, v: u8) {
        *self += u32::from(v);
    }
}

#[derive(Clone, Copy)]
struct Best {
    sum: u32,
    n: u32,
    template: u32,
}

fn accumulate<A: Acc>(
    template: &Template,
    responses: &ResponseSet,
    stride: usize,
    nx: usize,
    ny: usize,
    acc: &mut Vec<A>,
) {
    let w = responses.width;
    acc.clear();
    acc.resize(nx * ny, A::default());
    for f in &template.features {
        let Some(plane) = responses.plane(f.channel, f.bin) else {
            continue;
        };
        let (fx, fy) = (f.x as usize, f.y as usize);
        for (row, out) in acc.chunks_exact_mut(nx).enumerate() {
            let start = (row * stride + fy) * w + fx;
            if stride == 1 {
                for (o, &v) in out.iter_mut().zip(&plane[start..start + nx]) {
                    o.add_u8(v);
                }
            } else {
                for (i, o) in out.iter_mut().enumerate() {
                    o.add_u8(plane[start + i * stride]);
                }
            }
        }
    }
}

/// Best-scoring template per stride-aligned anchor, keeping those at or above
/// `threshold` percent. Unordered.
pub fn candidates(responses: &ResponseSet, db: &TemplateDb, threshold: f64, stride: usize) -> Vec<Detection> {
    let stride = stride.max(1);
    let (w, h) = (responses.width, responses.height);
    let gx = w.div_ceil(stride);
    let gy = h.div_ceil(stride);
    let mut best: Vec<Option<Best>> = vec![None; gx * gy];
    let mut acc16: Vec<u16> = Vec::new();
    let mut acc32: Vec<u32> = Vec::new();

    for (ti, t) in db.templates.iter().enumerate() {
        let n = t.features.len();
        if n == 0 || t.width > w || t.height > h {
            continue;
        }
        let nx = (w - t.width) / stride + 1;
        let ny = (h - t.height) / stride + 1;
        let min_sum = (threshold * n as f64).ceil().max(0.0) as u32;
        let mut visit = |i: usize, sum: u32| {
            if sum < min_sum {
                return;
            }
            let (ax, ay) = (i % nx, i / nx);
            let slot = &mut best[ay * gx + ax];
            let better = match slot {
                None => true,
                Some(b) => {
                    let lhs = u64::from(sum) * u64::from(b.n);
                    let rhs = u64::from(b.sum) * n as u64;
                    lhs > rhs || (lhs == rhs && t.template_id < db.templates[b.template as usize].template_id)
                }
            };
            if better {
                *slot = Some(Best {
                    sum,
                    n: n as u32,
                    template: ti as u32,
                });
            }
        };
        if n * 100 <= u16::MAX as usize {
            accumulate(t, responses, stride, nx, ny, &mut acc16);
            acc16.iter().enumerate().for_each(|(i, &s)| visit(i, u32::from(s)));
        } else {
            accumulate(t, responses, stride, nx, ny, &mut acc32);
            acc32.iter().enumerate().for_each(|(i, &s)| visit(i, s));
        }
    }

    best.iter()
        .enumerate()
        .filter_map(|(i, b)| {
            let b = (*b)?;
            let (x, y) = ((i % gx) * stride, (i / gx) * stride);
            let t = &db.templates[b.template as usize];
            Some(Detection {
                object_id: t.object_id.clone(),
                template_id: t.template_id,
                x,
                y,
                similarity: f64::from(b.sum) / f64::from(b.n),
                alignment: alignment(t, responses, x, y),
            })
        })
        .collect()
}

/// Greedy suppression in [`rank`] order: a detection is dropped when an
/// already kept one lies within Chebyshev distance `radius`.
pub fn non_max_suppress(mut detections: Vec<Detection>, radius: usize) -> Vec<Detection> {
    detections.sort_by(rank);
    // Kept anchors are pairwise more than `radius` apart, so a grid of that
    // cell size holds few of them per cell.
    let cell = radius.max(1);
    let mut grid: std::collections::HashMap<(usize, usize), Vec<(usize, usize)>> = Default::default();
    let mut kept = Vec::new();
    for d in detections {
        let (cx, cy) = (d.x / cell, d.y / cell);
        let clash = (cx.saturating_sub(1)..=cx + 1).any(|gx| {
            (cy.saturating_sub(1)..=cy + 1).any(|gy| {
                grid.get(&(gx, gy)).is_some_and(|pts| {
                    pts.iter().any(|&(x, y)| x.abs_diff(d.x).max(y.abs_diff(d.y)) <= radius)
                })
            })
        });
        if !clash {
            grid.entry((cx, cy)).or_default().push((d.x, d.y));
            kept.push(d);
        }
    }
    kept
}

/// Full search on precomputed responses: candidates, suppression, ranking.
pub fn detect_with_responses(
    responses: &ResponseSet,
    db: &TemplateDb,
    threshold: f64,
    stride: usize,
    nms_radius: usize,
) -> Vec<Detection> {
    non_max_suppress(candidates(responses, db, threshold, stride), nms_radius)
}

pub fn detect(frame: &RgbdFrame, db: &TemplateDb, cfg: &MatchConfig, threshold: f64, stride: usize) -> Result<Vec<Detection>> {
    db.check_config(cfg)?;
    if db.is_empty() {
        return Ok(Vec::new());
    }
    let responses = ResponseSet::from_frame(frame, db.channels, cfg)?;
    Ok(detect_with_responses(&responses, db, threshold, stride, cfg.nms_radius))
}

/// Mean wall-clock seconds of [`detect`] at the default threshold, response
/// map construction included.
pub fn bench_full_comparison(frame: &RgbdFrame, db: &TemplateDb, cfg: &MatchConfig, repetitions: usize) -> Result<f64> {
    if repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    let start = Instant::now();
    for _ in 0..repetitions {
        std::hint::black_box(detect(frame, db, cfg, crate::config::DEFAULT_THRESHOLD, 1)?);
    }
    Ok(start.elapsed().as_secs_f64() / repetitions as f64)
}
