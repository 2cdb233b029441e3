//! 3D localization of a detection.
//!
//! Unavailable depth is filled column by column from the nearest valid pixel
//! below it, which on a tabletop is the support surface the object stands on.
//! Template features are then back-projected, edge outliers removed, and the
//! remaining points averaged into a centroid.

use crate::error::{Error, Result};
use crate::frame::{backproject, CameraIntrinsics, Point3, UNAVAILABLE};
use crate::matcher::Detection;
use crate::templates::Template;

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectLocation {
    pub object_id: String,
    pub centroid: Point3,
    pub inlier_count: usize,
    pub used_feature_count: usize,
}

/// Pushes the first valid depth found below each unavailable pixel up into it.
pub fn scanline_depth_fill(depth: &[u16], width: usize, height: usize) -> Vec<u16> {
    let mut out = depth.to_vec();
    for x in 0..width {
        let mut below = UNAVAILABLE;
        for y in (0..height).rev() {
            let i = y * width + x;
            if depth[i] == UNAVAILABLE {
                out[i] = below;
            } else {
                below = depth[i];
            }
        }
    }
    out
}

/// Two passes of "drop points farther than mean + 2 sigma from the centroid",
/// never going below three points.
pub fn statistical_outlier_filter(points: &[Point3]) -> Vec<Point3> {
    const FLOOR: usize = 3;
    let mut pts = points.to_vec();
    for _ in 0..2 {
        if pts.len() <= FLOOR {
            break;
        }
        let c = centroid(&pts);
        let dist: Vec<f64> = pts.iter().map(|p| p.distance(&c)).collect();
        let n = dist.len() as f64;
        let mean = dist.iter().sum::<f64>() / n;
        let var = dist.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        let limit = mean + 2.0 * var.sqrt();
        let keep: Vec<bool> = dist.iter().map(|&d| d <= limit).collect();
        let kept = keep.iter().filter(|&&k| k).count();
        if kept == pts.len() {
            break;
        }
        if kept < FLOOR {
            let mut order: Vec<usize> = (0..pts.len()).collect();
            order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]));
            let mut nearest = order[..FLOOR].to_vec();
            nearest.sort_unstable();
            pts = nearest.into_iter().map(|i| pts[i]).collect();
            break;
        }
        pts = pts.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect();
    }
    pts
}

pub fn centroid(points: &[Point3]) -> Point3 {
    let n = points.len() as f64;
    let s = points.iter().fold(Point3::default(), |a, p| Point3::new(a.x + p.x, a.y + p.y, a.z + p.z));
    Point3::new(s.x / n, s.y / n, s.z / n)
}

/// Back-projects the detection's feature pixels through `filled_depth`.
pub fn locate(
    detection: &Detection,
    template: &Template,
    filled_depth: &[u16],
    width: usize,
    height: usize,
    intrinsics: &CameraIntrinsics,
) -> Result<ObjectLocation> {
    if detection.x + template.width > width || detection.y + template.height > height {
        return Err(Error::OutOfBounds {
            x: detection.x,
            y: detection.y,
        });
    }
    let points: Vec<Point3> = template
        .features
        .iter()
        .filter_map(|f| {
            let (u, v) = (detection.x + f.x as usize, detection.y + f.y as usize);
            backproject(u as f64, v as f64, filled_depth[v * width + u], intrinsics).ok()
        })
        .collect();
    if points.is_empty() {
        return Err(Error::LocalizationFailed);
    }
    let inliers = statistical_outlier_filter(&points);
    Ok(ObjectLocation {
        object_id: detection.object_id.clone(),
        centroid: centroid(&inliers),
        inlier_count: inliers.len(),
        used_feature_count: points.len(),
    })
}
