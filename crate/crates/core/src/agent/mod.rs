//! Recurrent Q-learning agent.

pub mod checkpoint;
pub mod network;
pub mod policy;
pub mod replay;
pub mod reward;
pub mod train;

pub use checkpoint::Checkpoint;
pub use network::{Hidden, NetShape, QNetwork, N_ACTIONS};
pub use policy::{AgentPolicy, RandomPolicy};
pub use replay::{EpisodeRecord, ReplayBuffer, Segment};
pub use reward::{reward, RewardSpec};
pub use train::{
    apply_gradient, play_episode, select_action, td_loss_and_grad, td_update, train, train_from,
    validate, LogRow, OptState, Optimizer, TrainObserver, TrainingConfig, TrainingLog, Validation,
};
