//! Allocation decision state and the greedy baseline allocators.
//!
//! Every time a robot becomes free the simulator snapshots the fleet and the
//! task queue into an [`AllocationState`] and asks an [`Allocator`] which
//! queued task that robot should take.

use crate::geometry::{Cell, Vec2};
use crate::planner::{DistanceMode, PathCache};
use crate::world::{Layout, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Robot tuple `(p_j, r_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotFeature {
    pub position: Vec2,
    /// Estimated seconds until the robot finishes its current task.
    pub time_left: f64,
}

/// Task tuple `(o_i, d_i, k_i, l_i)` as seen by the selected robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskFeature {
    pub origin: Vec2,
    pub destination: Vec2,
    /// Distance from the selected robot to the origin.
    pub pickup_distance: f64,
    /// Distance from the origin to the destination.
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationState {
    pub robots: Vec<RobotFeature>,
    pub tasks: Vec<TaskFeature>,
    pub selected: usize,
    /// Row-major `robots x tasks` matrix of robot-to-origin distances.
    pub origin_distances: Vec<f64>,
}

impl AllocationState {
    pub fn n_robots(&self) -> usize {
        self.robots.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    #[inline]
    pub fn origin_distance(&self, robot: usize, task: usize) -> f64 {
        self.origin_distances[robot * self.tasks.len() + task]
    }

    /// Checks the structural invariants; panics on violation.
    pub fn assert_valid(&self) {
        assert!(self.selected < self.robots.len(), "selected robot out of range");
        assert_eq!(self.robots[self.selected].time_left, 0.0, "selected robot is busy");
        assert_eq!(self.origin_distances.len(), self.robots.len() * self.tasks.len());
        for t in &self.tasks {
            assert!(t.pickup_distance >= 0.0 && t.length >= 0.0);
        }
    }
}

/// Builds the decision state for robot `selected`.
///
/// In direct mode distances are Euclidean from the robot's continuous
/// position; in A* mode they are shortest grid-path lengths from the cell the
/// robot occupies.
pub fn build_state(
    layout: &Layout,
    cache: &mut PathCache,
    robots: &[RobotFeature],
    tasks: &[Task],
    selected: usize,
    mode: DistanceMode,
) -> AllocationState {
    let m = robots.len();
    let n = tasks.len();
    let mut origin_distances = vec![0.0; m * n];
    let mut features = Vec::with_capacity(n);
    for (i, task) in tasks.iter().enumerate() {
        let origin = task.origin.center();
        let destination = task.destination.center();
        let length = match mode {
            DistanceMode::Direct => origin.distance(destination),
            DistanceMode::Astar => {
                let field = cache.field(layout, task.origin);
                for (j, r) in robots.iter().enumerate() {
                    origin_distances[j * n + i] = robot_field_distance(layout, &field, r.position);
                }
                field.get(task.destination)
            }
        };
        if mode == DistanceMode::Direct {
            for (j, r) in robots.iter().enumerate() {
                origin_distances[j * n + i] = r.position.distance(origin);
            }
        }
        features.push(TaskFeature {
            origin,
            destination,
            pickup_distance: origin_distances[selected * n + i],
            length,
        });
    }
    AllocationState { robots: robots.to_vec(), tasks: features, selected, origin_distances }
}

fn robot_field_distance(layout: &Layout, field: &crate::planner::DistanceField, p: Vec2) -> f64 {
    let cell = Cell::containing(p);
    let d = field.get(cell);
    if d.is_finite() {
        return d;
    }
    // Robot pushed onto an obstacle or off the grid: measure from the
    // nearest free cell.
    crate::planner::nearest_free(layout, cell).map_or(f64::INFINITY, |c| field.get(c) + p.distance(c.center()))
}

/// A task-allocation policy.
pub trait Allocator {
    fn name(&self) -> &str;

    /// Index into `state.tasks` of the task for `state.selected`.
    fn select(&mut self, state: &AllocationState) -> usize;
}

impl<A: Allocator + ?Sized> Allocator for &mut A {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn select(&mut self, state: &AllocationState) -> usize {
        (**self).select(state)
    }
}

impl<A: Allocator + ?Sized> Allocator for Box<A> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn select(&mut self, state: &AllocationState) -> usize {
        (**self).select(state)
    }
}

/// First index of the minimum; NaN counts as `+inf`.
fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for (i, v) in values.enumerate() {
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if i == 0 || v < best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Myopic pickup-distance minimisation: the task closest to the robot.
pub fn mpdm_select(state: &AllocationState) -> usize {
    argmin(state.tasks.iter().map(|t| t.pickup_distance))
}

/// How the regret of a task is formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegretVariant {
    /// Minimise the closest-robot distance over robots other than the selected one.
    pub exclude_selected: bool,
    /// Use `k_i - c_i` instead of `c_i - k_i`.
    pub reversed: bool,
}

/// Per-task regret values under `variant`.
pub fn regrets(state: &AllocationState, variant: RegretVariant) -> Vec<f64> {
    (0..state.n_tasks())
        .map(|i| {
            let k = state.tasks[i].pickup_distance;
            let closest = (0..state.n_robots())
                .filter(|&j| !(variant.exclude_selected && j == state.selected))
                .map(|j| state.origin_distance(j, i))
                .fold(f64::INFINITY, f64::min);
            let c = if closest.is_finite() || state.n_robots() > 1 { closest } else { k };
            let r = if variant.reversed { k - c } else { c - k };
            if r.is_nan() {
                f64::NEG_INFINITY
            } else {
                r
            }
        })
        .collect()
}

/// Regret-based task selection: the task with maximum regret.
pub fn rbts_select(state: &AllocationState) -> usize {
    rbts_select_variant(state, RegretVariant::default())
}

pub fn rbts_select_variant(state: &AllocationState, variant: RegretVariant) -> usize {
    argmin(regrets(state, variant).into_iter().map(|r| -r))
}

#[derive(Debug, Clone, Default)]
pub struct Mpdm;

impl Allocator for Mpdm {
    fn name(&self) -> &str {
        "mpdm"
    }

    fn select(&mut self, state: &AllocationState) -> usize {
        mpdm_select(state)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Rbts {
    pub variant: RegretVariant,
}

impl Allocator for Rbts {
    fn name(&self) -> &str {
        "rbts"
    }

    fn select(&mut self, state: &AllocationState) -> usize {
        rbts_select_variant(state, self.variant)
    }
}

/// Uniformly random task choice; the floor any learned policy must clear.
#[derive(Debug, Clone)]
pub struct UniformRandom {
    rng: ChaCha8Rng,
}

impl UniformRandom {
    pub fn new(seed: u64) -> Self {
        UniformRandom { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Allocator for UniformRandom {
    fn name(&self) -> &str {
        "random"
    }

    fn select(&mut self, state: &AllocationState) -> usize {
        self.rng.random_range(0..state.n_tasks())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::DistanceField;
    use crate::world::load_layout;

    /// State with explicit distances; robot 0 is selected.
    pub(crate) fn state_from(k: &[f64], others: &[&[f64]]) -> AllocationState {
        let n = k.len();
        let mut robots = vec![RobotFeature { position: Vec2::ZERO, time_left: 0.0 }];
        let mut d = k.to_vec();
        for row in others {
            robots.push(RobotFeature { position: Vec2::ZERO, time_left: 1.0 });
            d.extend_from_slice(row);
        }
        let tasks = k
            .iter()
            .map(|&k| TaskFeature { origin: Vec2::ZERO, destination: Vec2::ZERO, pickup_distance: k, length: 1.0 })
            .collect();
        assert_eq!(d.len(), robots.len() * n);
        AllocationState { robots, tasks, selected: 0, origin_distances: d }
    }

    #[test]
    fn direct_features() {
        let layout = load_layout(&"..........\n".repeat(12)).unwrap();
        let task = Task { id: 0, origin: Cell::new(3, 4), destination: Cell::new(3, 10), created_at: 0.0 };
        let robots = [RobotFeature { position: Cell::new(0, 0).center(), time_left: 0.0 }];
        let s = build_state(&layout, &mut PathCache::default(), &robots, &[task], 0, DistanceMode::Direct);
        assert_eq!(s.tasks[0].pickup_distance, 5.0);
        assert_eq!(s.tasks[0].length, 6.0);
        s.assert_valid();
    }

    #[test]
    fn robot_on_origin_has_zero_pickup_distance() {
        let layout = load_layout(&"......\n".repeat(6)).unwrap();
        let task = Task { id: 0, origin: Cell::new(2, 2), destination: Cell::new(5, 5), created_at: 0.0 };
        let robots = [RobotFeature { position: Cell::new(2, 2).center(), time_left: 0.0 }];
        for mode in [DistanceMode::Direct, DistanceMode::Astar] {
            let s = build_state(&layout, &mut PathCache::default(), &robots, &[task], 0, mode);
            assert_eq!(s.tasks[0].pickup_distance, 0.0);
        }
    }

    #[test]
    fn astar_features_follow_walls() {
        let layout = load_layout("P.#...\n..#...\n..#...\n......\n.....D\n").unwrap();
        let task = Task { id: 0, origin: Cell::new(4, 0), destination: Cell::new(5, 4), created_at: 0.0 };
        let robots = [
            RobotFeature { position: Cell::new(0, 0).center(), time_left: 0.0 },
            RobotFeature { position: Cell::new(5, 3).center(), time_left: 2.0 },
        ];
        let s = build_state(&layout, &mut PathCache::default(), &robots, &[task], 0, DistanceMode::Astar);
        let field = DistanceField::compute(&layout, Cell::new(4, 0));
        assert_eq!(s.tasks[0].pickup_distance, field.get(Cell::new(0, 0)));
        assert!(s.tasks[0].pickup_distance > Cell::new(0, 0).center().distance(Cell::new(4, 0).center()));
        assert_eq!(s.origin_distance(1, 0), field.get(Cell::new(5, 3)));
    }

    #[test]
    fn mpdm_examples() {
        assert_eq!(mpdm_select(&state_from(&[5.0, 3.0, 7.0], &[])), 1);
        assert_eq!(mpdm_select(&state_from(&[4.0, 4.0], &[])), 0);
    }

    #[test]
    fn rbts_single_robot_picks_first() {
        assert_eq!(rbts_select(&state_from(&[9.0, 1.0, 4.0], &[])), 0);
    }

    #[test]
    fn rbts_two_robot_example() {
        let s = state_from(&[2.0, 6.0], &[&[5.0, 3.0]]);
        assert_eq!(regrets(&s, RegretVariant::default()), vec![0.0, -3.0]);
        assert_eq!(rbts_select(&s), 0);
    }

    #[test]
    fn rbts_variants() {
        let s = state_from(&[2.0, 6.0], &[&[5.0, 3.0]]);
        let excl = RegretVariant { exclude_selected: true, reversed: false };
        assert_eq!(regrets(&s, excl), vec![3.0, -3.0]);
        let rev = RegretVariant { exclude_selected: false, reversed: true };
        assert_eq!(rbts_select_variant(&s, rev), 1);
    }

    #[test]
    fn infinite_distances_are_avoided() {
        let s = state_from(&[f64::INFINITY, 3.0], &[&[1.0, f64::INFINITY]]);
        assert_eq!(mpdm_select(&s), 1);
        assert!(rbts_select(&s) < 2);
    }

    #[test]
    fn random_allocator_stays_in_range() {
        let s = state_from(&[1.0, 2.0, 3.0], &[]);
        let mut a = UniformRandom::new(5);
        assert!((0..100).all(|_| a.select(&s) < 3));
    }
}
