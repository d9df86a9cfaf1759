use crate::geom::{BBox, Detection, GroundTruthObject};
use crate::matching::{assign_label, gain_target, match_detections};

/// Label, coarse score and post-zoom fine score of one coarse proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalOutcome {
    pub label_g: u8,
    pub p_l: f64,
    pub p_h: f64,
}

/// Cost-aware reward of one zoom:
/// `Σ_k (|g_k − p_l_k| − |g_k − p_h_k|) − λ · b / B`.
pub fn immediate_reward(outcomes: &[ProposalOutcome], window_pixels: f64, frame_pixels: f64, lambda: f64) -> f64 {
    let accuracy: f64 = outcomes.iter().map(|o| gain_target(o.label_g, o.p_l, o.p_h)).sum();
    accuracy - lambda * window_pixels / frame_pixels
}

/// Regression target `r + γ · max_a' Q(s', a')`; just `r` for terminal transitions.
pub fn bellman_target(reward: f64, gamma: f64, next_max: Option<f64>) -> f64 {
    match next_max {
        Some(q) => reward + gamma * q,
        None => reward,
    }
}

/// Tracks which coarse proposals have been replaced by fine detections.
#[derive(Debug, Clone)]
pub struct ZoomContext {
    coarse: Vec<Detection>,
    labels: Vec<u8>,
    replaced: Vec<bool>,
}

impl ZoomContext {
    pub fn new(coarse: Vec<Detection>, groundtruth: &[GroundTruthObject]) -> Self {
        let labels = coarse.iter().map(|d| assign_label(d, groundtruth)).collect();
        let replaced = vec![false; coarse.len()];
        ZoomContext { coarse, labels, replaced }
    }

    pub fn coarse(&self) -> &[Detection] {
        &self.coarse
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn replaced(&self) -> &[bool] {
        &self.replaced
    }

    /// Outcomes for every not-yet-replaced proposal whose center lies in
    /// `window`, matched one-to-one against the window's fine detections
    /// (fine score 0 when unmatched). Marks those proposals replaced.
    pub fn zoom(&mut self, window: &BBox, fine: &[Detection]) -> Vec<ProposalOutcome> {
        let inside: Vec<usize> = (0..self.coarse.len())
            .filter(|&k| !self.replaced[k] && window.contains_center_of(&self.coarse[k].bbox))
            .collect();
        let subset: Vec<Detection> = inside.iter().map(|&k| self.coarse[k].clone()).collect();
        let mut p_h = vec![0.0; inside.len()];
        for (i, j) in match_detections(&subset, fine) {
            p_h[i] = fine[j].score;
        }
        inside
            .iter()
            .zip(p_h)
            .map(|(&k, p_h)| {
                self.replaced[k] = true;
                ProposalOutcome { label_g: self.labels[k], p_l: self.coarse[k].score, p_h }
            })
            .collect()
    }
}
