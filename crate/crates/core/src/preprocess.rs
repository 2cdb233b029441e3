//! Temporal stabilization over a short window of frames from a static camera.
//!
//! Color is averaged per pixel. Depth is averaged over valid samples, but any
//! pixel that was unavailable in at least one frame of the window is dropped
//! from the stabilized output.

use crate::error::{Error, Result};
use crate::frame::{CameraIntrinsics, RgbdFrame, UNAVAILABLE};

pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Clone)]
pub struct FrameAccumulator {
    width: usize,
    height: usize,
    window_size: usize,
    intrinsics: CameraIntrinsics,
    rgb_sum: Vec<[u32; 3]>,
    depth_sum: Vec<u32>,
    depth_count: Vec<u16>,
    nan_union: Vec<bool>,
    frames_seen: usize,
    last_frame_id: u64,
}

impl FrameAccumulator {
    pub fn new(width: usize, height: usize, window_size: usize, intrinsics: CameraIntrinsics) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            window_size: window_size.max(1),
            intrinsics,
            rgb_sum: vec![[0; 3]; n],
            depth_sum: vec![0; n],
            depth_count: vec![0; n],
            nan_union: vec![false; n],
            frames_seen: 0,
            last_frame_id: 0,
        }
    }

    pub fn for_frame(frame: &RgbdFrame, window_size: usize) -> Self {
        Self::new(frame.width, frame.height, window_size, frame.intrinsics)
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn is_full(&self) -> bool {
        self.frames_seen >= self.window_size
    }

    /// Pixels that were unavailable in at least one accumulated frame.
    pub fn nan_union_mask(&self) -> &[bool] {
        &self.nan_union
    }

    pub fn accumulate(&mut self, frame: &RgbdFrame) -> Result<()> {
        if frame.dims() != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                actual: frame.dims(),
            });
        }
        if self.is_full() {
            return Err(Error::WindowFull(self.window_size));
        }
        for (i, (&rgb, &d)) in frame.rgb.iter().zip(&frame.depth).enumerate() {
            let acc = &mut self.rgb_sum[i];
            for c in 0..3 {
                acc[c] += u32::from(rgb[c]);
            }
            if d == UNAVAILABLE {
                self.nan_union[i] = true;
            } else {
                self.depth_sum[i] += u32::from(d);
                self.depth_count[i] += 1;
            }
        }
        self.frames_seen += 1;
        self.last_frame_id = frame.frame_id;
        Ok(())
    }

    pub fn finalize(&self) -> Result<RgbdFrame> {
        if self.frames_seen == 0 {
            return Err(Error::EmptyAccumulator);
        }
        let n = self.frames_seen as u32;
        let rgb = self
            .rgb_sum
            .iter()
            .map(|s| s.map(|c| round_div(c, n) as u8))
            .collect();
        let depth = (0..self.width * self.height)
            .map(|i| {
                if self.nan_union[i] {
                    UNAVAILABLE
                } else {
                    round_div(self.depth_sum[i], u32::from(self.depth_count[i])) as u16
                }
            })
            .collect();
        let mut out = RgbdFrame::new(self.width, self.height, rgb, depth, self.intrinsics)?;
        out.frame_id = self.last_frame_id;
        Ok(out)
    }

    pub fn reset(&mut self) {
        self.rgb_sum.fill([0; 3]);
        self.depth_sum.fill(0);
        self.depth_count.fill(0);
        self.nan_union.fill(false);
        self.frames_seen = 0;
    }
}

#[inline]
fn round_div(sum: u32, n: u32) -> u32 {
    (sum + n / 2) / n
}

/// Stabilizes a window of frames in one call.
pub fn stabilize(frames: &[RgbdFrame]) -> Result<RgbdFrame> {
    let first = frames.first().ok_or(Error::EmptyAccumulator)?;
    let mut acc = FrameAccumulator::for_frame(first, frames.len());
    for f in frames {
        acc.accumulate(f)?;
    }
    acc.finalize()
}

/// Fraction of pixels whose depth validity is not constant across `frames`.
pub fn unstable_fraction(frames: &[RgbdFrame]) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::TooFewFrames {
            needed: 2,
            got: frames.len(),
        });
    }
    let dims = frames[0].dims();
    if let Some(bad) = frames.iter().find(|f| f.dims() != dims) {
        return Err(Error::DimensionMismatch {
            expected: dims,
            actual: bad.dims(),
        });
    }
    let n = dims.0 * dims.1;
    let unstable = (0..n)
        .filter(|&i| {
            let first = frames[0].depth[i] == UNAVAILABLE;
            frames[1..].iter().any(|f| (f.depth[i] == UNAVAILABLE) != first)
        })
        .count();
    Ok(unstable as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 5.0, 5.0)
    }

    fn frame(depth: Vec<u16>, rgb: Vec<[u8; 3]>) -> RgbdFrame {
        RgbdFrame::new(10, 10, rgb, depth, k()).unwrap()
    }

    #[test]
    fn depth_mean_rounds_half_up() {
        let frames: Vec<_> = (0..10u16)
            .map(|i| frame(vec![1000 + i; 100], vec![[0; 3]; 100]))
            .collect();
        // mean of 1000..=1009 is 1004.5
        let out = stabilize(&frames).unwrap();
        assert!(out.depth.iter().all(|&d| d == 1005));
    }

    #[test]
    fn flicker_once_marks_unavailable() {
        let mut frames: Vec<_> = (0..10).map(|_| frame(vec![800; 100], vec![[9; 3]; 100])).collect();
        frames[2].depth[17] = 0;
        let out = stabilize(&frames).unwrap();
        assert_eq!(out.depth[17], 0);
        assert_eq!(out.depth[18], 800);
    }

    #[test]
    fn single_frame_window_is_identity() {
        let rgb = (0..100).map(|i| [i as u8, 2 * i as u8, 255 - i as u8]).collect();
        let depth = (0..100).map(|i| if i % 7 == 0 { 0 } else { 500 + i as u16 }).collect();
        let f = frame(depth, rgb);
        assert_eq!(stabilize(std::slice::from_ref(&f)).unwrap(), f);
    }

    #[test]
    fn identical_frames_are_reproduced() {
        let rgb = (0..100).map(|i| [i as u8, 3, 200]).collect();
        let f = frame(vec![1234; 100], rgb);
        let frames = vec![f.clone(); 10];
        assert_eq!(stabilize(&frames).unwrap(), f);
    }

    #[test]
    fn rgb_alternation_averages() {
        let frames: Vec<_> = (0..10)
            .map(|i| frame(vec![700; 100], vec![[if i % 2 == 0 { 100 } else { 110 }; 3]; 100]))
            .collect();
        let out = stabilize(&frames).unwrap();
        assert!(out.rgb.iter().all(|&p| p == [105; 3]));
    }

    #[test]
    fn accumulator_errors() {
        let acc = FrameAccumulator::new(10, 10, 3, k());
        assert!(matches!(acc.finalize(), Err(Error::EmptyAccumulator)));
        let mut acc = FrameAccumulator::new(10, 10, 1, k());
        let f = frame(vec![1; 100], vec![[0; 3]; 100]);
        acc.accumulate(&f).unwrap();
        assert!(matches!(acc.accumulate(&f), Err(Error::WindowFull(1))));
        let mut acc = FrameAccumulator::new(8, 10, 2, k());
        assert!(matches!(acc.accumulate(&f), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn unstable_fraction_counts_toggling_pixels() {
        let a = frame(vec![500; 100], vec![[0; 3]; 100]);
        assert_eq!(unstable_fraction(&[a.clone(), a.clone()]).unwrap(), 0.0);
        let mut b = a.clone();
        b.depth[42] = 0;
        assert_eq!(unstable_fraction(&[a.clone(), b, a.clone()]).unwrap(), 0.01);
        assert!(matches!(
            unstable_fraction(std::slice::from_ref(&a)),
            Err(Error::TooFewFrames { .. })
        ));
    }
}
