//! Evolutionary stochastic policy distillation for goal-conditioned,
//! sparse-reward tasks.
//!
//! The crate is split along the lines of the experiment:
//!
//! - [`numkit`]: seeded randomness, a small tanh MLP with hand-written
//!   backpropagation and an Adam optimizer.
//! - [`envs`]: deterministic goal-conditioned environments (point navigation
//!   and a two-link planar arm) with snapshot/restore.
//! - [`espd`]: the distillation loop itself: behavior policy, rollouts,
//!   hindsight relabeling, replay-based selection and supervised updates.
//! - [`fht`]: Monte-Carlo first-hitting-time study of a biased, goal-aware
//!   random walk.
//! - [`es`]: a parameter-space evolution strategies baseline.
//! - [`record`]: the shared metric row written by every training driver.

pub mod envs;
pub mod error;
pub mod es;
pub mod espd;
pub mod fht;
pub mod numkit;
pub mod record;

pub use error::{Error, Result};
