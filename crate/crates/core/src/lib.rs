//! Multimodal template matching for RGB-D tabletop scenes.
//!
//! Four cue channels feed a LINE-MOD style matcher: color gradients (M1),
//! depth normals (M2), the silhouette and extruded geometry of regions where
//! the depth sensor returns nothing (M3), and specular highlights that
//! coincide with missing depth (M4). The latter two make transparent and
//! partly transparent objects detectable.

pub mod config;
pub mod cues;
pub mod eval;
pub mod error;
pub mod frame;
pub mod localization;
pub mod matcher;
pub mod modalities;
pub mod preprocess;
pub mod response;
pub mod synth;
pub mod templates;

pub use config::MatchConfig;
pub use error::{Error, Result};
pub use frame::{CameraIntrinsics, Point3, RgbdFrame};
pub use matcher::Detection;
pub use modalities::{BinaryMask, Channel, ChannelSet};
pub use templates::{Template, TemplateDb};
