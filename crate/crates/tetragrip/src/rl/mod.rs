//! Recurrent PPO: the learned counterpart to the rule-based strategies.
//!
//! `net` holds the policy network (feed-forward embedding into an LSTM with
//! Gaussian actor and value heads) with hand-rolled backpropagation through
//! time. `gae` is the rollout buffer and advantage estimator. `env` wraps the
//! simulator behind a step/reset interface, defines the reward shaping, and
//! adapts a trained policy to the episode harness. `ppo` is the clipped
//! surrogate trainer.

use thiserror::Error;

mod env;
mod gae;
mod net;
mod ppo;

pub use env::{
    action_to_setpoints, auto_valves, checkpoint_factory, classifier_flags, observe, BanditEnv,
    EnvConfig, Environment, GraspEnv, PpoDriver, RewardBreakdown, RewardConfig, StepOutcome,
    OBS_BASE_LEN,
};
pub use gae::{compute_gae, normalize_advantages, RolloutBuffer};
pub use net::{
    gaussian_entropy, gaussian_logp, gaussian_sample, squash, Hidden, NetDims, RecurrentPolicy,
    StepOut,
};
pub use ppo::{
    curve_csv, evaluate, ppo_update, train, train_grasp, Adam, CurveRow, EvalStats, PpoConfig,
    TrainRun, UpdateStats,
};

// ---------- Errors ----------

#[derive(Debug, Error)]
pub enum RlError {
    #[error("bad config: {0}")]
    BadConfig(&'static str),
    #[error("observation length {got}, policy expects {expected}")]
    ObsLength { expected: usize, got: usize },
    #[error("action length {got}, environment expects {expected}")]
    ActionLength { expected: usize, got: usize },
    #[error("episode is over; reset the environment")]
    EpisodeOver,
    #[error("non-finite loss {value} at update {update}, epoch {epoch}, minibatch {minibatch}")]
    NonFiniteLoss { value: f64, update: u32, epoch: u32, minibatch: u32 },
    #[error("checkpoint does not describe a policy: {0}")]
    BadCheckpoint(&'static str),
    #[error(transparent)]
    Params(#[from] crate::params::ParamError),
    #[error(transparent)]
    Scene(#[from] crate::scene::SceneError),
    #[error(transparent)]
    Policy(#[from] crate::policies::PolicyError),
    #[error(transparent)]
    Classifier(#[from] crate::seal_classifier::ClassifierError),
    #[error(transparent)]
    Harness(#[from] Box<crate::harness::HarnessError>),
}

impl From<crate::harness::HarnessError> for RlError {
    fn from(e: crate::harness::HarnessError) -> RlError {
        RlError::Harness(Box::new(e))
    }
}
