use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::{ActionGrid, ZoomAction};
use super::qnet::QNetwork;
use super::refine::refine_window_excluding;
use super::replay::{ReplayBuffer, Transition};
use crate::agmap::AccuracyGainMap;
use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::seed;

/// Outcome of one environment step.
#[derive(Debug, Clone)]
pub struct Step {
    pub reward: f64,
    pub state: AccuracyGainMap,
    pub done: bool,
}

/// Episodic zoom environment driven by [`q_learning_train`].
pub trait Environment {
    /// Episodes per training epoch.
    fn episode_count(&self) -> usize;
    /// Starts an episode; `done` is set when it ends before any action.
    fn reset(&mut self, episode: usize) -> Result<Step>;
    fn step(&mut self, window: &ZoomAction) -> Result<Step>;
    fn frame(&self) -> (u32, u32);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RLConfig {
    pub gamma: f64,
    /// Target-network lag `C`, in updates.
    pub target_lag: usize,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    pub epochs: usize,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Environment steps between gradient updates.
    pub train_every: usize,
    pub max_steps: usize,
    pub refine: bool,
    /// Refinement shift as a fraction of the window stride.
    pub mu_factor: f64,
    pub mask_repeats: bool,
    pub seed: u64,
}

impl Default for RLConfig {
    fn default() -> Self {
        RLConfig {
            gamma: 0.5,
            target_lag: 10,
            epsilon_start: 1.0,
            epsilon_decay: 0.1,
            epsilon_floor: 0.1,
            epochs: 10,
            replay_capacity: 10_000,
            batch_size: 32,
            learning_rate: 0.01,
            train_every: 2,
            max_steps: 8,
            refine: true,
            mu_factor: 0.5,
            mask_repeats: true,
            seed: 17,
        }
    }
}

impl RLConfig {
    pub fn epsilon(&self, epoch: usize) -> f64 {
        (self.epsilon_start - self.epsilon_decay * epoch as f64).max(self.epsilon_floor)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("rl: {m}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_floor) {
            return bad("epsilon must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.replay_capacity == 0 || self.train_every == 0 {
            return bad("batch_size, replay_capacity and train_every must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.mu_factor >= 0.0) {
            return bad("mu_factor must be non-negative");
        }
        Ok(())
    }
}

/// Index of the largest finite value, lowest index on ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// ε-greedy choice over actions with finite values (`-inf` marks masked
/// actions). Exploration is uniform over the unmasked actions.
pub fn select_action<R: Rng + ?Sized>(values: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    let allowed: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_finite()).collect();
    if allowed.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let u: f64 = rng.random();
    if u < epsilon {
        Ok(allowed[rng.random_range(0..allowed.len())])
    } else {
        Ok(argmax(values).expect("non-empty"))
    }
}

pub(crate) fn mask_repeats(values: &mut [f64], grid: &ActionGrid, taken: &[BBox]) {
    for (i, v) in values.iter_mut().enumerate() {
        if taken.contains(&grid.action(i).bbox) {
            *v = f64::NEG_INFINITY;
        }
    }
}

pub(crate) fn mu_for(grid: &ActionGrid, class: usize, factor: f64) -> (f64, f64) {
    let c = &grid.classes()[class];
    (factor * c.stride_x, factor * c.stride_y)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Batch loss of every gradient update.
    pub losses: Vec<f64>,
    /// Undiscounted return of every episode.
    pub episode_returns: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub transitions: usize,
}

/// Deep Q-learning with uniform experience replay, ε-greedy exploration
/// decayed per epoch, and the lagged target held by [`QNetwork`].
pub fn q_learning_train(env: &mut dyn Environment, mut qnet: QNetwork, config: &RLConfig) -> Result<(QNetwork, TrainingLog)> {
    config.validate()?;
    let grid = qnet.grid().clone();
    if grid.frame() != env.frame() {
        return Err(Error::Config("Q-network grid and environment frame differ".into()));
    }
    let mut rng = seed::stage_rng(config.seed, "q-learning");
    let mut replay = ReplayBuffer::new(config.replay_capacity);
    let mut log = TrainingLog::default();
    let mut steps_seen = 0usize;
    for epoch in 0..config.epochs {
        let epsilon = config.epsilon(epoch);
        log.epsilons.push(epsilon);
        for episode in 0..env.episode_count() {
            let start = env.reset(episode)?;
            let mut state = start.state;
            let mut encoded = qnet.encode(&state)?;
            let mut taken: Vec<BBox> = Vec::new();
            let mut ret = 0.0;
            let steps = if start.done { 0 } else { config.max_steps };
            for t in 0..steps {
                let mut values = qnet.q_values_encoded(&encoded)?;
                if config.mask_repeats {
                    mask_repeats(&mut values, &grid, &taken);
                }
                let Ok(a) = select_action(&values, epsilon, &mut rng) else { break };
                let proposed = grid.action(a);
                let window = if config.refine {
                    let mu = mu_for(&grid, proposed.size_class, config.mu_factor);
                    refine_window_excluding(&proposed, &state, mu, grid.frame(), &taken)
                } else {
                    proposed
                };
                let step = env.step(&window)?;
                taken.push(window.bbox);
                ret += step.reward;
                let next = qnet.encode(&step.state)?;
                let terminal = step.done || t + 1 == config.max_steps;
                replay.push(Transition {
                    state: std::mem::replace(&mut encoded, next.clone()),
                    action: a,
                    reward: step.reward,
                    next_state: next,
                    terminal,
                });
                log.transitions += 1;
                steps_seen += 1;
                if replay.len() >= config.batch_size && steps_seen.is_multiple_of(config.train_every) {
                    let batch = replay.sample(config.batch_size, &mut rng);
                    log.losses.push(qnet.train_step(&batch, config.gamma, config.learning_rate)?);
                }
                state = step.state;
                if terminal {
                    break;
                }
            }
            log.episode_returns.push(ret);
        }
    }
    qnet.round_to_f32();
    Ok((qnet, log))
}
