//! Neighborhood-size selection as an MDP, trained with PPO.

mod env;
mod ppo;

pub use env::{
    compute_gae, raw_reward, shaping_weight, BanditEnv, EnvStep, Environment, EpisodeRecord, LnsEnv, LnsEnvConfig,
};
pub use ppo::{
    minibatch_loss, ppo_update, train, train_on_instances, IterationLog, MinibatchLoss, PpoConfig, Sample,
    TrainOutcome, UpdateStats, LOG_HEADER,
};
