//! Synthetic scenes, detector oracles and pixel-cost accounting.

mod cost;
mod detector;
mod scene;

pub use cost::{CostLedger, TimeModel};
pub use detector::{run_detector, DetectorModel, Rolloff};
pub use scene::{generate_scene, Scene, SceneConfig, SizeBand};
