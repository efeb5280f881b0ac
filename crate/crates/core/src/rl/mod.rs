//! Learned task allocation: an attention policy over the decision state,
//! trained by policy gradient against measured travel delay.

mod checkpoint;
mod env;
mod evaluate;
mod features;
mod network;
mod train;

pub use checkpoint::{Checkpoint, TensorRecord, CHECKPOINT_FORMAT};
pub use env::{AllocationEnv, SimEnv, TwoTaskEnv};
pub use evaluate::{evaluate, make_allocator, AllocatorKind, Comparison, ComparisonRow, RunRecord};
pub use features::{Features, Normalization, NormalizationScheme, NormalizationSpec, ROBOT_FEATURES, TASK_FEATURES};
pub use network::{log_softmax, softmax, tensor_specs, Policy, Trace};
pub use train::{train, train_with, Adam, Algorithm, RewardMode, TrainConfig, TrainLogRow, TrainOutcome};

use crate::allocation::{AllocationState, Allocator};
use crate::world::Layout;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("travel delay must be non-negative, got {0}")]
    NegativeTtd(f64),
    #[error("policy produced a non-finite logit")]
    NonFiniteLogits,
    #[error("training diverged at update {update}: {reason}")]
    Diverged { update: usize, reason: String },
    #[error("normalization mismatch: checkpoint expects nominal speed {expected}, configuration uses {found}")]
    NormalizationMismatch { expected: f64, found: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error("{allocator} run with seed {seed}: {source}")]
    Run { allocator: &'static str, seed: u64, source: crate::sim::SimError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    /// Draw from the policy distribution (training).
    Sample,
    /// Highest logit, lowest index on ties (evaluation).
    Argmax,
}

/// First index of the largest value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Chooses a task from `logits`; returns the index and its log-probability.
pub fn select_from_logits<R: Rng + ?Sized>(logits: &[f64], mode: ActionMode, rng: &mut R) -> (usize, f64) {
    let log_p = log_softmax(logits);
    let index = match mode {
        ActionMode::Argmax => argmax(logits),
        ActionMode::Sample => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = log_p.len() - 1;
            for (i, lp) in log_p.iter().enumerate() {
                acc += lp.exp();
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        }
    };
    (index, log_p[index])
}

pub fn select_action<R: Rng + ?Sized>(
    policy: &Policy,
    state: &AllocationState,
    norm: &Normalization,
    mode: ActionMode,
    rng: &mut R,
) -> Result<(usize, f64), RlError> {
    let logits = policy.logits(&Features::from_state(state, norm));
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(RlError::NonFiniteLogits);
    }
    Ok(select_from_logits(&logits, mode, rng))
}

/// Reward for one allocation: the negated travel delay.
pub fn compute_reward(ttd: f64) -> Result<f64, RlError> {
    if !(ttd >= 0.0) {
        return Err(RlError::NegativeTtd(ttd));
    }
    Ok(-ttd)
}

/// [`compute_reward`] divided by a positive time scale.
pub fn scaled_reward(ttd: f64, time_scale: f64) -> Result<f64, RlError> {
    Ok(compute_reward(ttd)? / time_scale)
}

/// A trained policy acting as an [`Allocator`].
#[derive(Debug, Clone)]
pub struct RlAllocator {
    policy: Arc<Policy>,
    norm: Normalization,
    mode: ActionMode,
    rng: ChaCha8Rng,
}

impl RlAllocator {
    /// Greedy allocator for `layout`. Fails when the checkpoint was trained
    /// with a different nominal speed than `nominal_speed`.
    pub fn new(
        policy: Arc<Policy>,
        spec: &NormalizationSpec,
        layout: &Layout,
        nominal_speed: f64,
    ) -> Result<Self, RlError> {
        if spec.nominal_speed != nominal_speed {
            return Err(RlError::NormalizationMismatch { expected: spec.nominal_speed, found: nominal_speed });
        }
        Ok(RlAllocator {
            policy,
            norm: spec.for_layout(layout),
            mode: ActionMode::Argmax,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    /// Switches to sampling with the given seed.
    pub fn sampling(mut self, seed: u64) -> Self {
        self.mode = ActionMode::Sample;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self
    }
}

impl Allocator for RlAllocator {
    fn name(&self) -> &str {
        "dc-mrta"
    }

    fn select(&mut self, state: &AllocationState) -> usize {
        match select_action(&self.policy, state, &self.norm, self.mode, &mut self.rng) {
            Ok((i, _)) => i,
            Err(e) => panic!("{e}"),
        }
    }
}
