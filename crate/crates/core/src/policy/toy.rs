//! Two-window toy MDP with a known optimal policy.
//!
//! Frame 480×240, one 320×240 window class, so two actions: `A` at x = 0 and
//! `B` at x = 160. From the start state, `A` pays 0.2 and ends the episode;
//! `B` pays 0.1 and leads to a second state where `A` pays 0.4 and `B` pays 0,
//! both terminal.

use super::grid::{build_action_grid, ActionGrid, WindowSize, ZoomAction};
use super::qnet::{QNetConfig, QNetwork};
use super::train::{q_learning_train, Environment, RLConfig, Step, TrainingLog};
use crate::agmap::AccuracyGainMap;
use crate::error::{Error, Result};

pub const FRAME: (u32, u32) = (480, 240);
pub const WINDOW: WindowSize = WindowSize { w: 320, h: 240 };
pub const ACTION_A: usize = 0;
pub const ACTION_B: usize = 1;
/// `(reward, terminal)` for `[state][action]`.
pub const TABLE: [[(f64, bool); 2]; 2] = [[(0.2, true), (0.1, false)], [(0.4, true), (0.0, true)]];

const SCALE: f64 = 2.0;

pub fn grid() -> ActionGrid {
    build_action_grid(FRAME.0, FRAME.1, &[WINDOW]).expect("toy grid")
}

#[derive(Debug, Clone)]
pub struct TwoRegionToy {
    episodes: usize,
    state: Option<usize>,
    map: AccuracyGainMap,
}

impl TwoRegionToy {
    pub fn new(episodes: usize) -> Self {
        TwoRegionToy { episodes, state: None, map: Self::start_map() }
    }

    /// Decreasing mass from left to right thirds. Zooming `B` clears the
    /// middle third too, so both windows see the second state differently.
    pub fn start_map() -> AccuracyGainMap {
        let (w, h) = ((FRAME.0 as f64 / SCALE) as usize, (FRAME.1 as f64 / SCALE) as usize);
        let row: Vec<f64> = (0..w)
            .map(|x| match 3 * x / w {
                0 => 1.0 / 64.0,
                1 => 0.5 / 64.0,
                _ => 0.25 / 64.0,
            })
            .collect();
        AccuracyGainMap::from_values(w, h, row.repeat(h), SCALE).expect("toy map")
    }
}

impl Environment for TwoRegionToy {
    fn episode_count(&self) -> usize {
        self.episodes
    }

    fn frame(&self) -> (u32, u32) {
        FRAME
    }

    fn reset(&mut self, _episode: usize) -> Result<Step> {
        self.state = Some(0);
        self.map = Self::start_map();
        Ok(Step { reward: 0.0, state: self.map.clone(), done: false })
    }

    fn step(&mut self, window: &ZoomAction) -> Result<Step> {
        let s = self.state.ok_or_else(|| Error::Config("toy: step outside an episode".into()))?;
        let a = if window.bbox.x < 80.0 { ACTION_A } else { ACTION_B };
        let (reward, done) = TABLE[s][a];
        self.map.zero_region(&window.bbox);
        self.state = if done { None } else { Some(1) };
        Ok(Step { reward, state: self.map.clone(), done })
    }
}

pub fn toy_config(seed: u64) -> RLConfig {
    RLConfig {
        epochs: 10,
        batch_size: 16,
        learning_rate: 0.05,
        max_steps: 2,
        refine: false,
        seed,
        ..RLConfig::default()
    }
}

/// Trains a fresh Q-network on the toy with `seed` for both initialization
/// and exploration.
pub fn train_toy(seed: u64, episodes_per_epoch: usize) -> Result<(QNetwork, TrainingLog)> {
    let config = toy_config(seed);
    let start = TwoRegionToy::start_map();
    let q = QNetwork::new(&grid(), start.width(), start.height(), SCALE, &QNetConfig::default(), config.target_lag, seed)?;
    let mut env = TwoRegionToy::new(episodes_per_epoch);
    q_learning_train(&mut env, q, &config)
}

/// Greedy action of `q` in the start state.
pub fn first_action(q: &QNetwork) -> Result<usize> {
    let v = q.q_values(&TwoRegionToy::start_map())?;
    Ok(super::train::argmax(&v).expect("two actions"))
}

/// Start-state action values by value iteration over `TABLE`.
pub fn solve(gamma: f64) -> [f64; 2] {
    let mut q = [[0.0f64; 2]; 2];
    for _ in 0..64 {
        let v1 = q[1][0].max(q[1][1]);
        for s in 0..2 {
            for a in 0..2 {
                let (r, done) = TABLE[s][a];
                q[s][a] = if done { r } else { r + gamma * v1 };
            }
        }
    }
    q[0]
}

/// Optimal first action under `gamma`.
pub fn optimal_first_action(gamma: f64) -> usize {
    let q = solve(gamma);
    if q[ACTION_B] > q[ACTION_A] { ACTION_B } else { ACTION_A }
}
