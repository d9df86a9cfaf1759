use serde::{Deserialize, Serialize};

/// Running cost of processing one image.
///
/// `pixels_processed` counts pixels at processing scale (a half-scale pass over
/// a `W × H` frame costs `W·H/4`). Overlapping regions are charged independently.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub pixels_processed: u64,
    pub wall_time: f64,
    pub steps: usize,
    pub detector_calls: usize,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge_pass(&mut self, pixels: u64, elapsed_secs: f64) {
        self.pixels_processed += pixels;
        self.wall_time += elapsed_secs;
        self.detector_calls += 1;
    }

    pub fn merge(&mut self, other: &CostLedger) {
        self.pixels_processed += other.pixels_processed;
        self.wall_time += other.wall_time;
        self.steps += other.steps;
        self.detector_calls += other.detector_calls;
    }

    pub fn modeled_time_ms(&self, model: &TimeModel) -> f64 {
        model.time_ms(self.detector_calls, self.pixels_processed)
    }
}

/// Deterministic detector latency model: a fixed cost per detector call plus a
/// cost per processed megapixel. Measured wall-clock of the simulator is kept
/// in the ledger too, but it is not reproducible run to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeModel {
    pub per_call_ms: f64,
    pub per_megapixel_ms: f64,
}

impl Default for TimeModel {
    fn default() -> Self {
        // Calibrated so that a half-scale pass takes ~40% of a full-frame pass
        // on a 640x480 frame.
        TimeModel { per_call_ms: 62.7, per_megapixel_ms: 785.5 }
    }
}

impl TimeModel {
    pub fn time_ms(&self, calls: usize, pixels: u64) -> f64 {
        calls as f64 * self.per_call_ms + pixels as f64 * 1e-6 * self.per_megapixel_ms
    }
}
