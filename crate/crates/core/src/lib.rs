//! Temporally grounded policy optimization for signal temporal logic tasks.
//!
//! The pipeline: parse a formula ([`stl`]), flatten it into timed subgoals
//! and invariants ([`decompose`]), ground the time variables ([`grounding`]),
//! and train a time-conditioned policy on the augmented MDP ([`mdp`],
//! [`learner`]). [`harness`] ties these together.

pub mod decompose;
pub mod env;
pub mod grounding;
pub mod harness;
pub mod learner;
pub mod mdp;
pub mod stl;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Stl(#[from] stl::StlError),
    #[error(transparent)]
    Decompose(#[from] decompose::DecomposeError),
    #[error(transparent)]
    Env(#[from] env::EnvError),
    #[error(transparent)]
    Mdp(#[from] mdp::MdpError),
    #[error(transparent)]
    Learner(#[from] learner::LearnerError),
    #[error(transparent)]
    Grounding(#[from] grounding::GroundingError),
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("training diverged at epoch {epoch}: {msg}")]
    Diverged { epoch: usize, msg: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
