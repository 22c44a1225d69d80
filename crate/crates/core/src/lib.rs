//! Successor features and generalised policy improvement for multitask
//! reinforcement learning.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`]: task/feature vectors, tabular MDPs and the environment interface.
//! - [`exact`]: dynamic-programming oracles (optimal values, successor features
//!   of a fixed policy, brute-force optimal returns).
//! - [`gpi`]: generalised policy improvement over candidate sets and the
//!   associated performance bound.
//! - [`nn`]: a small multilayer perceptron with exact backpropagation.
//! - [`agent`]: universal successor features approximators, UVFA baselines and
//!   their n-step training loops.
//! - [`envs`]: Trip MDP, the two-state MDP, a gridworld object-collection task
//!   and task-set generators.
//! - [`harness`]: experiment specs, evaluation, optimality gaps and outputs.

pub mod agent;
pub mod envs;
pub mod error;
pub mod exact;
pub mod gpi;
pub mod harness;
pub mod mdp;
pub mod nn;

pub use error::{Error, Result};
