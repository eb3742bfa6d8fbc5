//! PPO training of the oracle policy: vectorized rollouts, GAE, clipped
//! surrogate updates with an adaptive-KL learning rate.

mod buffer;
mod gae;
mod ppo;
mod train;

pub use buffer::RolloutBuffer;
pub use gae::{compute_gae, normalize_advantages};
pub use ppo::{
    collect_rollout, ppo_update, EpisodeRecord, EpisodeTracker, PPOConfig, RunningMeanStd,
    TrainStats, ValueFunction,
};
pub use train::{
    evaluate_policy, train_oracle, EvalEpisode, RlError, TrainEnvSetup, TrainSink, CURVE_HEADER,
};
