//! Gaussian policy and critic networks trained with PPO.

mod mlp;
mod obs;
mod optim;
mod policy;
mod ppo;
mod rollout;

use thiserror::Error;

pub use mlp::Mlp;
pub use obs::{initial_observation, obs_dim, observe, StateFields, TaskEnv};
pub use optim::{clip_grad_norm, AdamW};
pub use policy::{log_prob, GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};
pub use ppo::{clipped_surrogate, gae, value_loss_grad, Agent, PpoConfig, PpoSamples, UpdateStats};
pub use rollout::{rollout, round_robin, EpisodeSummary, EpisodicEnv, RolloutBatch};

use crate::mdp::MdpError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnerError {
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}
