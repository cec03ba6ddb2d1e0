//! Data-driven safety layer for reinforcement learning.
//!
//! From noisy offline trajectories of an unknown linear system the crate
//! identifies a matrix-zonotope set of models, propagates reachable sets
//! with it, and filters every action proposed by an RL agent through a
//! predictive controller that returns the closest action whose reachable
//! tube stays clear of obstacles (and ends in a braking manoeuvre).
//!
//! Module map:
//! - [`set_algebra`]: zonotope arithmetic and interval tests
//! - [`reachability`]: data matrices, model set, reachable sets
//! - [`safety_filter`]: free-space boxes, predictive control, plans
//! - [`environment`]: 2-D navigation world and offline data collection
//! - [`rl_agent`]: TD3 and a random baseline
//! - [`orchestrator`]: training/evaluation loops, metrics, traces, replay

pub mod environment;
pub mod error;
pub mod orchestrator;
pub mod parallel;
pub mod reachability;
pub mod rl_agent;
pub mod safety_filter;
pub mod set_algebra;

pub use error::{Error, Result};
