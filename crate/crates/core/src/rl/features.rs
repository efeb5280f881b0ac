use crate::allocation::AllocationState;
use crate::world::Layout;
use serde::{Deserialize, Serialize};

pub const TASK_FEATURES: usize = 6;
pub const ROBOT_FEATURES: usize = 3;

/// Stand-in for unreachable (infinite) distances after normalisation.
const FAR: f64 = 4.0;

/// How features are scaled; stored with every checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    /// Always `"layout_diagonal"`: positions and distances are divided by
    /// the layout diagonal, times by `diagonal / nominal_speed`.
    pub scheme: NormalizationScheme,
    pub nominal_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationScheme {
    LayoutDiagonal,
}

impl NormalizationSpec {
    pub fn new(nominal_speed: f64) -> Self {
        NormalizationSpec { scheme: NormalizationScheme::LayoutDiagonal, nominal_speed }
    }

    pub fn for_layout(&self, layout: &Layout) -> Normalization {
        self.for_diagonal(layout.diagonal())
    }

    pub fn for_diagonal(&self, diagonal: f64) -> Normalization {
        Normalization { length_scale: diagonal, time_scale: diagonal / self.nominal_speed }
    }
}

/// Concrete scales for one layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub length_scale: f64,
    pub time_scale: f64,
}

/// Normalised network input for one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub tasks: Vec<[f64; TASK_FEATURES]>,
    pub robots: Vec<[f64; ROBOT_FEATURES]>,
    pub selected: usize,
}

fn finite_or_far(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        FAR
    }
}

impl Features {
    pub fn from_state(state: &AllocationState, norm: &Normalization) -> Features {
        let l = norm.length_scale;
        let tasks = state
            .tasks
            .iter()
            .map(|t| {
                [
                    t.origin.x / l,
                    t.origin.y / l,
                    t.destination.x / l,
                    t.destination.y / l,
                    finite_or_far(t.pickup_distance / l),
                    finite_or_far(t.length / l),
                ]
            })
            .collect();
        let robots = state
            .robots
            .iter()
            .map(|r| [r.position.x / l, r.position.y / l, finite_or_far(r.time_left / norm.time_scale)])
            .collect();
        Features { tasks, robots, selected: state.selected }
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }
}
