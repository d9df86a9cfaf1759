use serde::{Deserialize, Serialize};

use super::grid::{ActionGrid, ZoomAction};
use super::qnet::QNetwork;
use super::refine::refine_window_excluding;
use super::reward::{immediate_reward, ZoomContext};
use super::train::{argmax, mask_repeats, mu_for, Environment, Step};
use crate::agmap::{build_ag_map, AccuracyGainMap};
use crate::error::{Error, Result};
use crate::geom::{iou, BBox, Detection};
use crate::matching::entropy_gain;
use crate::regressor::GainRegressor;
use crate::sim::{run_detector, CostLedger, DetectorModel, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Stop once the AG-map sum falls below this value.
    pub stop_threshold: f64,
    pub max_steps: usize,
    /// Cost weight `λ` in the reward.
    pub lambda: f64,
    /// AG-map scale factor applied to every gain.
    pub alpha: f64,
    pub refine: bool,
    pub mu_factor: f64,
    /// Sum only positive AG-map cells for the stop rule.
    pub positive_stop: bool,
    /// Exclude windows identical to an earlier zoom.
    pub mask_repeats: bool,
    pub coarse_scale: f64,
    /// Also stop a Q-net policy once no unmasked action has positive value.
    pub value_stop: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            stop_threshold: 0.1,
            max_steps: 8,
            lambda: 4.0,
            alpha: 1.0,
            refine: true,
            mu_factor: 0.5,
            positive_stop: false,
            mask_repeats: true,
            coarse_scale: 0.5,
            value_stop: false,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.coarse_scale > 0.0 && self.coarse_scale <= 1.0) {
            return Err(Error::Config("episode: coarse_scale must lie in (0, 1]".into()));
        }
        if !(self.mu_factor >= 0.0) || !self.lambda.is_finite() || !self.alpha.is_finite() {
            return Err(Error::Config("episode: mu_factor, lambda and alpha must be finite, mu_factor >= 0".into()));
        }
        Ok(())
    }
}

/// Where per-proposal gains come from when building the AG map.
#[derive(Debug, Clone, Copy)]
pub enum GainSource<'a> {
    Regressor(&'a GainRegressor),
    /// Binary entropy of the coarse score.
    Entropy,
}

impl GainSource<'_> {
    pub fn gain(&self, det: &Detection) -> Result<f64> {
        match self {
            GainSource::Regressor(r) => r.predict_gain(&det.feature),
            GainSource::Entropy => Ok(entropy_gain(det.score)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    QNet(&'a QNetwork),
    /// Pick the grid window with the largest current AG-map sum.
    Greedy,
}

/// Live state of one image being processed.
#[derive(Debug, Clone)]
pub struct EpisodeState<'a> {
    scene: &'a Scene,
    fine_model: &'a DetectorModel,
    config: EpisodeConfig,
    map: AccuracyGainMap,
    ctx: ZoomContext,
    ledger: CostLedger,
    coarse_pixels: u64,
    pass_times: Vec<f64>,
    windows: Vec<ZoomAction>,
    window_detections: Vec<Vec<Detection>>,
    rewards: Vec<f64>,
}

impl<'a> EpisodeState<'a> {
    /// Runs the coarse pass and builds the initial AG map.
    pub fn start(
        scene: &'a Scene,
        coarse_model: &DetectorModel,
        fine_model: &'a DetectorModel,
        gain: GainSource<'_>,
        config: &EpisodeConfig,
    ) -> Result<Self> {
        config.validate()?;
        let mut ledger = CostLedger::new();
        let coarse = run_detector(coarse_model, scene, &scene.frame(), config.coarse_scale, &mut ledger)?;
        let proposals = coarse
            .iter()
            .map(|d| Ok((d.bbox.scaled(config.coarse_scale), gain.gain(d)?)))
            .collect::<Result<Vec<_>>>()?;
        let map_w = (scene.width as f64 * config.coarse_scale).round() as usize;
        let map_h = (scene.height as f64 * config.coarse_scale).round() as usize;
        let map = build_ag_map(&proposals, map_w, map_h, config.alpha, 1.0 / config.coarse_scale)?;
        Ok(EpisodeState {
            scene,
            fine_model,
            config: config.clone(),
            map,
            ctx: ZoomContext::new(coarse, &scene.objects),
            coarse_pixels: ledger.pixels_processed,
            pass_times: vec![ledger.wall_time],
            ledger,
            windows: Vec::new(),
            window_detections: Vec::new(),
            rewards: Vec::new(),
        })
    }

    pub fn map(&self) -> &AccuracyGainMap {
        &self.map
    }

    pub fn context(&self) -> &ZoomContext {
        &self.ctx
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn steps(&self) -> usize {
        self.windows.len()
    }

    pub fn taken(&self) -> Vec<BBox> {
        self.windows.iter().map(|w| w.bbox).collect()
    }

    pub fn stop_sum(&self) -> f64 {
        if self.config.positive_stop {
            self.map.positive_sum()
        } else {
            self.map.sum()
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stop_sum() < self.config.stop_threshold || self.steps() >= self.config.max_steps
    }

    /// Fine pass on `window`, reward bookkeeping and AG-map zeroing.
    pub fn zoom(&mut self, window: &ZoomAction) -> Result<f64> {
        let frame = self.scene.frame();
        if !frame.encloses(&window.bbox) {
            return Err(Error::RegionOutsideFrame {
                region: window.bbox,
                width: self.scene.width,
                height: self.scene.height,
            });
        }
        let before = self.ledger.wall_time;
        let fine = run_detector(self.fine_model, self.scene, &window.bbox, 1.0, &mut self.ledger)?;
        self.pass_times.push(self.ledger.wall_time - before);
        let outcomes = self.ctx.zoom(&window.bbox, &fine);
        let reward = immediate_reward(&outcomes, window.bbox.area(), frame.area(), self.config.lambda);
        self.map.zero_region(&window.bbox);
        self.ledger.steps += 1;
        self.windows.push(*window);
        self.window_detections.push(fine);
        self.rewards.push(reward);
        Ok(reward)
    }

    pub fn finish(self, proposed: Vec<ZoomAction>) -> EpisodeResult {
        let pairs: Vec<(BBox, Vec<Detection>)> =
            self.windows.iter().map(|w| w.bbox).zip(self.window_detections.iter().cloned()).collect();
        EpisodeResult {
            detections: merge_detections(self.ctx.coarse(), &pairs),
            zoom_trail: self.windows,
            proposed_trail: proposed,
            ledger: self.ledger,
            rewards: self.rewards,
            coarse: self.ctx.coarse().to_vec(),
            window_detections: self.window_detections,
            coarse_pixels: self.coarse_pixels,
            pass_times: self.pass_times,
        }
    }
}

/// Outcome of processing one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub detections: Vec<Detection>,
    /// Windows actually zoomed (after refinement).
    pub zoom_trail: Vec<ZoomAction>,
    /// Windows chosen by the policy before refinement.
    pub proposed_trail: Vec<ZoomAction>,
    pub ledger: CostLedger,
    pub rewards: Vec<f64>,
    pub coarse: Vec<Detection>,
    pub window_detections: Vec<Vec<Detection>>,
    pub coarse_pixels: u64,
    /// Wall time of the coarse pass followed by each fine pass.
    pub pass_times: Vec<f64>,
}

impl EpisodeResult {
    /// The result the same policy would have produced with `max_steps = k`.
    pub fn truncated(&self, k: usize) -> EpisodeResult {
        let k = k.min(self.zoom_trail.len());
        let pairs: Vec<(BBox, Vec<Detection>)> = self.zoom_trail[..k]
            .iter()
            .map(|w| w.bbox)
            .zip(self.window_detections[..k].iter().cloned())
            .collect();
        let window_pixels: u64 = self.zoom_trail[..k].iter().map(|w| w.bbox.area().round() as u64).sum();
        EpisodeResult {
            detections: merge_detections(&self.coarse, &pairs),
            zoom_trail: self.zoom_trail[..k].to_vec(),
            proposed_trail: self.proposed_trail[..k].to_vec(),
            ledger: CostLedger {
                pixels_processed: self.coarse_pixels + window_pixels,
                wall_time: self.pass_times[..=k].iter().sum(),
                steps: k,
                detector_calls: 1 + k,
            },
            rewards: self.rewards[..k].to_vec(),
            coarse: self.coarse.clone(),
            window_detections: self.window_detections[..k].to_vec(),
            coarse_pixels: self.coarse_pixels,
            pass_times: self.pass_times[..=k].to_vec(),
        }
    }
}

/// Coarse detections whose centers lie outside every zoomed window, plus the
/// fine detections of all windows. Duplicate fine detections (IoU > 0.5, from
/// overlapping windows) keep the higher score; a remaining coarse detection
/// overlapping a fine one at IoU > 0.5 is dropped in favour of the fine one.
pub fn merge_detections(coarse: &[Detection], windows: &[(BBox, Vec<Detection>)]) -> Vec<Detection> {
    let mut fine: Vec<&Detection> = windows.iter().flat_map(|(_, d)| d).collect();
    fine.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut kept_fine: Vec<&Detection> = Vec::new();
    for d in fine {
        if kept_fine.iter().all(|k| iou(&k.bbox, &d.bbox) <= 0.5) {
            kept_fine.push(d);
        }
    }
    let mut out: Vec<Detection> = coarse
        .iter()
        .filter(|c| !windows.iter().any(|(w, _)| w.contains_center_of(&c.bbox)))
        .filter(|c| kept_fine.iter().all(|f| iou(&f.bbox, &c.bbox) <= 0.5))
        .cloned()
        .collect();
    out.extend(kept_fine.into_iter().cloned());
    out
}

/// What the runner saw at one step, for tracing and property checks.
#[derive(Debug)]
pub struct StepView<'s> {
    pub step: usize,
    pub before: &'s AccuracyGainMap,
    pub after: &'s AccuracyGainMap,
    pub proposed: ZoomAction,
    pub refined: ZoomAction,
    pub reward: f64,
}

fn choose(policy: Policy<'_>, state: &EpisodeState<'_>, grid: &ActionGrid) -> Result<Option<usize>> {
    let mut values = match policy {
        Policy::QNet(q) => q.q_values(state.map())?,
        Policy::Greedy => grid.actions().map(|a| state.map().region_sum(&a.bbox)).collect(),
    };
    if state.config.mask_repeats {
        mask_repeats(&mut values, grid, &state.taken());
    }
    let best = argmax(&values);
    if state.config.value_stop && matches!(policy, Policy::QNet(_)) && best.is_some_and(|a| values[a] <= 0.0) {
        return Ok(None);
    }
    Ok(best)
}

/// Processes one image with `policy` (greedy, `ε = 0`).
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    policy: Policy<'_>,
    scene: &Scene,
    coarse_model: &DetectorModel,
    fine_model: &DetectorModel,
    gain: GainSource<'_>,
    grid: &ActionGrid,
    config: &EpisodeConfig,
) -> Result<EpisodeResult> {
    run_inner(policy, scene, coarse_model, fine_model, gain, grid, config, None)
}

/// As [`run_episode`], calling `observer` after every zoom.
#[allow(clippy::too_many_arguments)]
pub fn run_episode_observed(
    policy: Policy<'_>,
    scene: &Scene,
    coarse_model: &DetectorModel,
    fine_model: &DetectorModel,
    gain: GainSource<'_>,
    grid: &ActionGrid,
    config: &EpisodeConfig,
    observer: &mut dyn FnMut(&StepView<'_>),
) -> Result<EpisodeResult> {
    run_inner(policy, scene, coarse_model, fine_model, gain, grid, config, Some(observer))
}

#[allow(clippy::too_many_arguments)]
fn run_inner(
    policy: Policy<'_>,
    scene: &Scene,
    coarse_model: &DetectorModel,
    fine_model: &DetectorModel,
    gain: GainSource<'_>,
    grid: &ActionGrid,
    config: &EpisodeConfig,
    mut observer: Option<&mut dyn FnMut(&StepView<'_>)>,
) -> Result<EpisodeResult> {
    if grid.frame() != (scene.width, scene.height) {
        return Err(Error::Config("action grid frame differs from scene frame".into()));
    }
    let mut state = EpisodeState::start(scene, coarse_model, fine_model, gain, config)?;
    let mut proposed_trail = Vec::new();
    while !state.should_stop() {
        let Some(a) = choose(policy, &state, grid)? else { break };
        let proposed = grid.action(a);
        let refined = if config.refine {
            let mu = mu_for(grid, proposed.size_class, config.mu_factor);
            refine_window_excluding(&proposed, state.map(), mu, grid.frame(), &state.taken())
        } else {
            proposed
        };
        let before = observer.as_ref().map(|_| state.map().clone());
        let reward = state.zoom(&refined)?;
        proposed_trail.push(proposed);
        if let (Some(obs), Some(before)) = (observer.as_mut(), before.as_ref()) {
            obs(&StepView { step: state.steps() - 1, before, after: state.map(), proposed, refined, reward });
        }
    }
    Ok(state.finish(proposed_trail))
}

/// Training environment over a fixed list of scenes, one episode per scene
/// per epoch.
pub struct SceneEnv<'a> {
    scenes: &'a [Scene],
    coarse_model: &'a DetectorModel,
    fine_model: &'a DetectorModel,
    gain: GainSource<'a>,
    config: EpisodeConfig,
    current: Option<EpisodeState<'a>>,
}

impl<'a> SceneEnv<'a> {
    pub fn new(
        scenes: &'a [Scene],
        coarse_model: &'a DetectorModel,
        fine_model: &'a DetectorModel,
        gain: GainSource<'a>,
        config: &EpisodeConfig,
    ) -> Result<Self> {
        if scenes.is_empty() {
            return Err(Error::EmptyData);
        }
        let (w, h) = (scenes[0].width, scenes[0].height);
        if scenes.iter().any(|s| (s.width, s.height) != (w, h)) {
            return Err(Error::Config("training scenes must share one frame size".into()));
        }
        config.validate()?;
        Ok(SceneEnv { scenes, coarse_model, fine_model, gain, config: config.clone(), current: None })
    }
}

impl Environment for SceneEnv<'_> {
    fn episode_count(&self) -> usize {
        self.scenes.len()
    }

    fn frame(&self) -> (u32, u32) {
        (self.scenes[0].width, self.scenes[0].height)
    }

    fn reset(&mut self, episode: usize) -> Result<Step> {
        let scene = &self.scenes[episode % self.scenes.len()];
        let state = EpisodeState::start(scene, self.coarse_model, self.fine_model, self.gain, &self.config)?;
        let step = Step { reward: 0.0, state: state.map().clone(), done: state.should_stop() };
        self.current = Some(state);
        Ok(step)
    }

    fn step(&mut self, window: &ZoomAction) -> Result<Step> {
        let state = self.current.as_mut().ok_or_else(|| Error::Config("step before reset".into()))?;
        let reward = state.zoom(window)?;
        Ok(Step { reward, state: state.map().clone(), done: state.should_stop() })
    }
}
