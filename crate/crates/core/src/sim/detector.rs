use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CostLedger, Scene};
use crate::error::{Error, Result};
use crate::geom::{BBox, Detection, Source};
use crate::seed;

/// Fall-off of detection quality for objects larger than the detector handles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rolloff {
    pub size: f64,
    pub softness: f64,
}

/// Black-box detector stand-in. Detection probability is logistic in the
/// object height measured at processing scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub source: Source,
    /// Height (pixels at processing scale) detected with probability 0.5.
    pub size_midpoint: f64,
    pub size_softness: f64,
    pub score_noise_sd: f64,
    /// Expected false positives per processed megapixel.
    pub false_positive_rate: f64,
    pub fp_score_min: f64,
    pub fp_score_max: f64,
    /// Box jitter in pixels at processing scale.
    pub localization_jitter_sd: f64,
    pub feature_dim: usize,
    pub seed_stream: u64,
    #[serde(default)]
    pub upper_rolloff: Option<Rolloff>,
    /// Objects are reported as if this many pixels taller, but scored at
    /// their true size: marginal objects still yield low-score proposals.
    #[serde(default)]
    pub proposal_margin: f64,
}

impl DetectorModel {
    pub fn coarse_default() -> Self {
        DetectorModel {
            source: Source::Coarse,
            size_midpoint: 24.0,
            size_softness: 3.5,
            score_noise_sd: 0.15,
            false_positive_rate: 40.0,
            fp_score_min: 0.05,
            fp_score_max: 0.4,
            localization_jitter_sd: 1.5,
            feature_dim: 16,
            seed_stream: 0xC0A7,
            upper_rolloff: None,
            proposal_margin: 12.0,
        }
    }

    pub fn fine_default() -> Self {
        DetectorModel {
            source: Source::Fine,
            size_midpoint: 18.0,
            size_softness: 3.5,
            score_noise_sd: 0.08,
            false_positive_rate: 6.0,
            fp_score_min: 0.05,
            fp_score_max: 0.4,
            localization_jitter_sd: 0.6,
            feature_dim: 16,
            seed_stream: 0xF14E,
            upper_rolloff: Some(Rolloff { size: 190.0, softness: 12.0 }),
            proposal_margin: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("detector model: {m}")));
        if !(self.size_softness > 0.0) || !self.size_midpoint.is_finite() {
            return bad("size_softness must be positive and size_midpoint finite");
        }
        if !(self.score_noise_sd >= 0.0) || !(self.false_positive_rate >= 0.0) || !(self.localization_jitter_sd >= 0.0) {
            return bad("noise levels and rates must be nonnegative");
        }
        if !(0.0 <= self.fp_score_min && self.fp_score_min <= self.fp_score_max && self.fp_score_max <= 1.0) {
            return bad("false positive scores must satisfy 0 <= min <= max <= 1");
        }
        if self.feature_dim < 4 {
            return bad("feature_dim must be at least 4");
        }
        if !(self.proposal_margin >= 0.0 && self.proposal_margin.is_finite()) {
            return bad("proposal_margin must be finite and nonnegative");
        }
        if let Some(r) = self.upper_rolloff {
            if !(r.softness > 0.0) || !r.size.is_finite() {
                return bad("upper rolloff softness must be positive");
            }
        }
        Ok(())
    }

    /// Probability that a fully visible object of the given height (pixels at
    /// processing scale) is reported.
    pub fn detection_probability(&self, effective_size: f64) -> f64 {
        let p = sigmoid((effective_size - self.size_midpoint) / self.size_softness);
        match self.upper_rolloff {
            Some(r) => p * (1.0 - sigmoid((effective_size - r.size) / r.softness)),
            None => p,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

const REGION_EPS: f64 = 1e-9;

/// Runs the detector oracle over `region` (high-resolution coordinates) of
/// `scene` at `scale`, charging `region.area() · scale²` pixels to `ledger`.
///
/// Each groundtruth object owns a random stream keyed by
/// `(model.seed_stream, scene.seed, object index)`, so an object gets the same
/// draw whichever region it is seen through. Objects cut by the region edge
/// are detected with probability scaled by their visible fraction.
/// Detections are reported in high-resolution coordinates.
pub fn run_detector(
    model: &DetectorModel,
    scene: &Scene,
    region: &BBox,
    scale: f64,
    ledger: &mut CostLedger,
) -> Result<Vec<Detection>> {
    let started = Instant::now();
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidScale(scale));
    }
    if !region.is_valid() {
        return Err(Error::InvalidBox(*region));
    }
    let frame = scene.frame();
    if region.x < -REGION_EPS
        || region.y < -REGION_EPS
        || region.right() > frame.right() + REGION_EPS
        || region.bottom() > frame.bottom() + REGION_EPS
    {
        return Err(Error::RegionOutsideFrame { region: *region, width: scene.width, height: scene.height });
    }

    let noise_dims = model.feature_dim - 4;
    let jitter = model.localization_jitter_sd / scale;
    let noise_clip = 2.0 * model.score_noise_sd;
    let mut found: Vec<(BBox, f64, Vec<f64>)> = Vec::new();

    for (k, obj) in scene.objects.iter().enumerate() {
        let visible = obj.bbox.intersection_area(region) / obj.bbox.area();
        if visible <= 0.0 {
            continue;
        }
        let mut rng = seed::rng(seed::mix_all(&[model.seed_stream, scene.seed, k as u64, 0xD7]));
        let u: f64 = rng.random();
        let z: f64 = rng.sample(StandardNormal);
        let j: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let extra: Vec<f64> = (0..noise_dims).map(|_| rng.sample(StandardNormal)).collect();

        let size = obj.bbox.h * scale;
        if u >= model.detection_probability(size + model.proposal_margin) * visible {
            continue;
        }
        let p = model.detection_probability(size) * visible;
        let score = (p + (z * model.score_noise_sd).clamp(-noise_clip, noise_clip)).clamp(0.0, 1.0);
        let b = &obj.bbox;
        let w = (b.w + 0.5 * jitter * j[2]).max(1.0);
        let h = (b.h + 0.5 * jitter * j[3]).max(1.0);
        let jittered = BBox { x: b.x + jitter * j[0], y: b.y + jitter * j[1], w, h };
        if let Some(clipped) = jittered.intersection(region) {
            found.push((clipped, score, extra));
        }
    }

    let processed_mp = region.area() * scale * scale * 1e-6;
    let expected_fp = model.false_positive_rate * processed_mp;
    if expected_fp > 0.0 {
        let region_key = [region.x, region.y, region.w, region.h, scale].map(f64::to_bits);
        let mut parts = vec![model.seed_stream, scene.seed, 0xF9];
        parts.extend_from_slice(&region_key);
        let mut rng = seed::rng(seed::mix_all(&parts));
        let poisson = Poisson::new(expected_fp).map_err(|e| Error::Config(e.to_string()))?;
        let count = poisson.sample(&mut rng) as usize;
        for _ in 0..count {
            let h = (rng.random_range(0.6..1.6) * model.size_midpoint / scale).min(region.h);
            let w = (h * rng.random_range(0.3..0.55)).min(region.w);
            let x = region.x + rng.random::<f64>() * (region.w - w);
            let y = region.y + rng.random::<f64>() * (region.h - h);
            let score = if model.fp_score_max > model.fp_score_min {
                rng.random_range(model.fp_score_min..model.fp_score_max)
            } else {
                model.fp_score_min
            };
            let extra: Vec<f64> = (0..noise_dims).map(|_| rng.sample(StandardNormal)).collect();
            found.push((BBox { x, y, w, h }, score, extra));
        }
    }

    let detections = found
        .iter()
        .map(|(bbox, score, extra)| {
            let (cx, cy) = bbox.center();
            let neighbours = found
                .iter()
                .filter(|(other, _, _)| {
                    let (ox, oy) = other.center();
                    other != bbox && ((ox - cx).powi(2) + (oy - cy).powi(2)).sqrt() < 2.0 * bbox.h
                })
                .count();
            let mut feature = Vec::with_capacity(model.feature_dim);
            feature.push(*score);
            feature.push(bbox.h * scale / 32.0);
            feature.push(bbox.w / bbox.h);
            feature.push(neighbours as f64 / 4.0);
            feature.extend_from_slice(extra);
            Detection { bbox: *bbox, score: *score, feature, source: model.source }
        })
        .collect();

    let pixels = (region.area() * scale * scale).round() as u64;
    ledger.charge_pass(pixels, started.elapsed().as_secs_f64());
    Ok(detections)
}
