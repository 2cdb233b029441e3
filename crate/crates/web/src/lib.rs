//! Browser demo: render a tabletop scene, inspect the four cue channels and
//! run detection with a small database trained in the page.

use std::fmt::Write as _;

use modmatch::cues::{FrameCues, ResponseSet};
use modmatch::eval::{observe, standard_catalog, train_catalog, Protocol};
use modmatch::localization::locate;
use modmatch::matcher::detect_with_responses;
use modmatch::response::NO_BIN;
use modmatch::synth::{NoiseSpec, SceneSpec};
use modmatch::{Channel, ChannelSet, MatchConfig, RgbdFrame, TemplateDb};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// One hue per bin, black where a pixel carries no cue.
fn bin_color(bin: u8, bins: usize) -> [u8; 3] {
    if bin == NO_BIN {
        return [0, 0, 0];
    }
    let h = f64::from(bin) / bins.max(1) as f64 * 6.0;
    let x = (1.0 - (h % 2.0 - 1.0).abs()) * 255.0;
    let (r, g, b) = match h as u32 {
        0 => (255.0, x, 0.0),
        1 => (x, 255.0, 0.0),
        2 => (0.0, 255.0, x),
        3 => (0.0, x, 255.0),
        4 => (x, 0.0, 255.0),
        _ => (255.0, 0.0, x),
    };
    [r as u8, g as u8, b as u8]
}

fn rgba(pixels: impl Iterator<Item = [u8; 3]>) -> Vec<u8> {
    pixels.flat_map(|[r, g, b]| [r, g, b, 255]).collect()
}

#[wasm_bindgen]
pub struct Demo {
    cfg: MatchConfig,
    dbs: Vec<TemplateDb>,
    frame: Option<RgbdFrame>,
    cues: Option<FrameCues>,
}

#[wasm_bindgen]
impl Demo {
    /// Trains {M1,M2} and four-channel databases on every catalog object
    /// at one station and `rotations` turns.
    #[wasm_bindgen(constructor)]
    pub fn new(rotations: usize) -> Result<Demo, JsError> {
        let cfg = MatchConfig::default();
        let mut protocol = Protocol {
            stations: vec![(0.0, 0.6)],
            rotations: rotations.max(1),
            ..Protocol::default()
        };
        protocol.base.frames = 3;
        let sets = [ChannelSet::BASELINE, ChannelSet::ALL];
        let trained = train_catalog(&protocol, &standard_catalog(), &sets, &cfg, false).map_err(js_err)?;
        Ok(Demo {
            cfg,
            dbs: trained.dbs,
            frame: None,
            cues: None,
        })
    }

    pub fn objects() -> Vec<String> {
        standard_catalog().into_iter().map(|o| o.id).collect()
    }

    pub fn template_counts(&self) -> String {
        self.dbs
            .iter()
            .map(|d| format!("{}: {}", d.channels.label(), d.len()))
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Renders one catalog object on a fresh table and stabilizes the frames.
    pub fn render(&mut self, object: &str, x: f64, z: f64, rotation: f64, seed: u64, noisy: bool) -> Result<(), JsError> {
        let mut o = standard_catalog()
            .into_iter()
            .find(|o| o.id == object)
            .ok_or_else(|| JsError::new(&format!("unknown object `{object}`")))?;
        o.x = x;
        o.z = z;
        o.rotation = rotation;
        let mut spec = SceneSpec {
            objects: vec![o],
            seed,
            frames: 5,
            ..SceneSpec::default()
        };
        spec.table.texture_seed = seed ^ 0x5eed;
        if !noisy {
            spec.noise = NoiseSpec::none();
        }
        let obs = observe(&spec).map_err(js_err)?;
        self.cues = Some(FrameCues::compute(&obs.frame, ChannelSet::ALL, &self.cfg).map_err(js_err)?);
        self.frame = Some(obs.frame);
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.frame.as_ref().map_or(0, |f| f.width)
    }

    pub fn height(&self) -> usize {
        self.frame.as_ref().map_or(0, |f| f.height)
    }

    /// RGBA pixels of `view`: "color", "depth", or a channel name m1..m4.
    pub fn image(&self, view: &str) -> Result<Vec<u8>, JsError> {
        let (frame, cues) = match (&self.frame, &self.cues) {
            (Some(f), Some(c)) => (f, c),
            _ => return Err(JsError::new("render a scene first")),
        };
        let ob = self.cfg.orientation_bins;
        let nb = self.cfg.normal_azimuth_bins + 1;
        let quantized = |q: &Option<modmatch::response::QuantizedMap>, bins: usize| {
            let q = q.as_ref().expect("all channels computed");
            rgba(q.bins.iter().map(|&b| bin_color(b, bins)))
        };
        Ok(match view {
            "color" => rgba(frame.rgb.iter().copied()),
            "depth" => {
                let (lo, hi) = frame
                    .depth
                    .iter()
                    .filter(|&&d| d > 0)
                    .fold((u16::MAX, 0), |(lo, hi), &d| (lo.min(d), hi.max(d)));
                let span = f64::from(hi.saturating_sub(lo).max(1));
                rgba(frame.depth.iter().map(|&d| {
                    if d == 0 {
                        [200, 0, 60]
                    } else {
                        let v = (255.0 - 215.0 * f64::from(d - lo) / span) as u8;
                        [v, v, v]
                    }
                }))
            }
            "m1" => quantized(&cues.q_gradient, ob),
            "m2" => quantized(&cues.q_normal, nb),
            "m3" => {
                let t = cues.q_transparency.as_ref().expect("computed");
                let e = cues.q_extruded.as_ref().expect("computed");
                rgba(t.bins.iter().zip(&e.bins).map(|(&a, &b)| {
                    if a != NO_BIN {
                        [255, 255, 255]
                    } else {
                        bin_color(b, nb)
                    }
                }))
            }
            "m4" => quantized(&cues.q_specular, ob),
            other => return Err(JsError::new(&format!("unknown view `{other}`"))),
        })
    }

    /// Detections as JSON: `[{object, x, y, w, h, similarity, centroid}]`,
    /// best first. `channels` is "m1,m2" or "all".
    pub fn detect(&self, channels: &str, threshold: f64) -> Result<String, JsError> {
        let set: ChannelSet = channels.parse().map_err(js_err)?;
        let db = self
            .dbs
            .iter()
            .find(|d| d.channels == set)
            .ok_or_else(|| JsError::new(&format!("no database for {set}")))?;
        let (frame, cues) = match (&self.frame, &self.cues) {
            (Some(f), Some(c)) => (f, c),
            _ => return Err(JsError::new("render a scene first")),
        };
        let responses = ResponseSet::build_for(cues, set, &self.cfg);
        let dets = detect_with_responses(&responses, db, threshold, 1, self.cfg.nms_radius);
        let mut s = String::from("[");
        for (i, d) in dets.iter().take(10).enumerate() {
            let t = db.get(d.template_id).expect("template exists");
            let c = locate(d, t, &cues.filled_depth, frame.width, frame.height, &frame.intrinsics)
                .map(|l| format!("[{:.3},{:.3},{:.3}]", l.centroid.x, l.centroid.y, l.centroid.z))
                .unwrap_or_else(|_| "null".into());
            if i > 0 {
                s.push(',');
            }
            let _ = write!(
                s,
                r#"{{"object":"{}","x":{},"y":{},"w":{},"h":{},"similarity":{:.1},"centroid":{}}}"#,
                d.object_id, d.x, d.y, t.width, t.height, d.similarity, c
            );
        }
        s.push(']');
        Ok(s)
    }
}

/// Channel names in display order.
#[wasm_bindgen]
pub fn channel_names() -> Vec<String> {
    Channel::ALL.iter().map(|c| c.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_get_distinct_colors() {
        let colors: Vec<[u8; 3]> = (0..8).map(|b| bin_color(b, 8)).collect();
        for (i, a) in colors.iter().enumerate() {
            assert!(colors[i + 1..].iter().all(|b| b != a));
        }
        assert_eq!(bin_color(NO_BIN, 8), [0, 0, 0]);
    }

    #[test]
    fn demo_finds_the_rendered_object() {
        let mut demo = Demo::new(2).unwrap();
        demo.render("soup_can", 0.0, 0.6, 0.0, 1, false).unwrap();
        assert_eq!(demo.image("m3").unwrap().len(), demo.width() * demo.height() * 4);
        let json = demo.detect("all", 75.0).unwrap();
        assert!(json.starts_with(r#"[{"object":"soup_can""#), "{json}");
    }
}
