//! Sequential zoom-window selection: action grid, cost-aware reward, window
//! refinement, the Q-network and its training loop, and the episode runner.

mod episode;
mod grid;
mod qnet;
mod refine;
mod replay;
mod reward;
pub mod toy;
mod train;

pub use episode::{
    merge_detections, run_episode, run_episode_observed, EpisodeConfig, EpisodeResult, EpisodeState, GainSource,
    Policy, SceneEnv, StepView,
};
pub use grid::{build_action_grid, ActionGrid, SizeClass, WindowSize, ZoomAction};
pub use qnet::{HeadGeometry, QGeometry, QNetConfig, QNetwork, QParams};
pub use refine::{refine_window, refine_window_excluding};
pub use replay::{ReplayBuffer, Transition};
pub use reward::{bellman_target, immediate_reward, ProposalOutcome, ZoomContext};
pub use train::{argmax, q_learning_train, select_action, Environment, RLConfig, Step, TrainingLog};
