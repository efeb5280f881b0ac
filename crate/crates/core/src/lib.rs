//! Two-level warehouse fleet control: a learned task allocator on top of
//! decentralized reciprocal collision avoidance.
//!
//! * [`world`]: grid layouts, region sampling and the task stream.
//! * [`planner`]: grid A*, distance fields and path following.
//! * [`orca`]: velocity obstacles, half-plane constraints and the LP solver.
//! * [`sim`]: the discrete-time fleet simulator and its metrics.
//! * [`allocation`]: decision states and the greedy baselines.
//! * [`rl`]: the attention policy, its training loop and checkpoints.
//! * [`report`]: result tables and improvement percentages.

// `!(x > 0.0)` is how validation rejects NaN along with the negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod exec;
pub mod geometry;
pub mod orca;
pub mod planner;
pub mod report;
pub mod rl;
pub mod sim;
pub mod world;
