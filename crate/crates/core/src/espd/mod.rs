//! Evolutionary stochastic policy distillation.
//!
//! A deterministic target policy is perturbed with Gaussian action noise to
//! collect episodes. Every episode is relabeled with hindsight goals over
//! spans `1..=K`; a candidate survives only if the noise-free target policy,
//! replayed from the same start state, fails to reach the hindsight goal in as
//! many steps. Survivors go to a FIFO buffer and the target policy regresses
//! onto them with a plain mean-squared-error objective. No reward value ever
//! reaches the update.

mod buffer;
mod collect;
mod policy;
mod train;

pub use buffer::{HidBuffer, HidTuple};
pub use collect::{relabel, rollout, select, select_counted, Episode};
pub use policy::{behavior_act, evaluate, GoalPolicy, GreedySolver, Policy};
pub use train::{spd_update, train, Collected, TrainConfig, TrainOutcome, Trainer};
