use super::{Normalization, NormalizationSpec, RlError};
use crate::allocation::{AllocationState, Allocator, RobotFeature, TaskFeature};
use crate::geometry::Vec2;
use crate::sim::{EventKind, SimConfig, SimError, SimEvent, Simulation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Source of allocation episodes for training.
pub trait AllocationEnv: Sync {
    /// Number of distinct scenarios episodes cycle through.
    fn scenario_count(&self) -> usize;

    fn normalization(&self, scenario: usize, spec: &NormalizationSpec) -> Normalization;

    /// Plays one episode, asking `actor` for every decision. Returns the
    /// travel delay (seconds) caused by each decision, in decision order;
    /// trailing decisions whose delay is unknown are omitted.
    fn play(
        &self,
        scenario: usize,
        seed: u64,
        actor: &mut dyn FnMut(&AllocationState) -> usize,
    ) -> Result<Vec<f64>, RlError>;

    /// Best action for `state` when the environment knows it.
    fn optimal_action(&self, _state: &AllocationState) -> Option<usize> {
        None
    }
}

struct ActorAllocator<'a> {
    actor: &'a mut dyn FnMut(&AllocationState) -> usize,
    estimates: Vec<f64>,
    speed: f64,
}

impl Allocator for ActorAllocator<'_> {
    fn name(&self) -> &str {
        "actor"
    }

    fn select(&mut self, state: &AllocationState) -> usize {
        let a = (self.actor)(state);
        self.estimates.push(state.tasks.get(a).map_or(0.0, |t| t.pickup_distance) / self.speed);
        a
    }
}

/// Simulator-backed episodes: each runs until `k_train` decisions have a
/// known travel delay.
#[derive(Debug, Clone)]
pub struct SimEnv {
    pub scenarios: Vec<SimConfig>,
    pub k_train: usize,
    /// Use the planned distance at decision time instead of the measured delay.
    pub estimate_rewards: bool,
}

impl SimEnv {
    pub fn new(scenarios: Vec<SimConfig>, k_train: usize) -> Self {
        SimEnv { scenarios, k_train, estimate_rewards: false }
    }
}

impl AllocationEnv for SimEnv {
    fn scenario_count(&self) -> usize {
        self.scenarios.len()
    }

    fn normalization(&self, scenario: usize, spec: &NormalizationSpec) -> Normalization {
        spec.for_layout(&self.scenarios[scenario].layout)
    }

    fn play(
        &self,
        scenario: usize,
        seed: u64,
        actor: &mut dyn FnMut(&AllocationState) -> usize,
    ) -> Result<Vec<f64>, RlError> {
        let mut config = self.scenarios[scenario].clone();
        config.seed = seed;
        // The episode ends on decision count, not on completions.
        config.total_tasks = usize::MAX;
        config.parallel = false;
        let speed = config.cruise_speed();
        let mut sim = Simulation::new(config)?;
        let mut alloc = ActorAllocator { actor, estimates: Vec::new(), speed };
        let mut task_of: Vec<u64> = Vec::new();
        let mut ttd_of: HashMap<u64, f64> = HashMap::new();
        absorb(&sim.start(&mut alloc)?, &mut task_of, &mut ttd_of);
        let known = |task_of: &[u64], ttd_of: &HashMap<u64, f64>| {
            task_of.iter().take_while(|t| ttd_of.contains_key(t)).count()
        };
        if !self.estimate_rewards {
            while known(&task_of, &ttd_of) < self.k_train {
                match sim.tick(&mut alloc) {
                    Ok(events) => absorb(&events, &mut task_of, &mut ttd_of),
                    Err(SimError::Deadlock { .. }) => break,
                    Err(e) => return Err(e.into()),
                }
            }
            let n = known(&task_of, &ttd_of).min(self.k_train);
            return Ok(task_of[..n].iter().map(|t| ttd_of[t]).collect());
        }
        while alloc.estimates.len() < self.k_train {
            match sim.tick(&mut alloc) {
                Ok(_) => {}
                Err(SimError::Deadlock { .. }) => break,
                Err(e) => return Err(e.into()),
            }
        }
        alloc.estimates.truncate(self.k_train);
        Ok(alloc.estimates)
    }
}

fn absorb(events: &[SimEvent], task_of: &mut Vec<u64>, ttd_of: &mut HashMap<u64, f64>) {
    for e in events {
        match e.kind {
            EventKind::Allocated { task, .. } => task_of.push(task),
            EventKind::PickupReached { task, ttd, .. } => {
                ttd_of.insert(task, ttd);
            }
            _ => {}
        }
    }
}

/// Degenerate two-task environment: one task is at the robot (`k = 0`), the
/// other `far` units away, in random order. The optimal action is obvious.
#[derive(Debug, Clone)]
pub struct TwoTaskEnv {
    pub decisions: usize,
    pub far: f64,
    pub extent: f64,
}

impl Default for TwoTaskEnv {
    fn default() -> Self {
        TwoTaskEnv { decisions: 16, far: 100.0, extent: 100.0 }
    }
}

impl TwoTaskEnv {
    pub fn sample_state(&self, rng: &mut ChaCha8Rng) -> AllocationState {
        let mut point = || Vec2::new(rng.random_range(0.0..self.extent), rng.random_range(0.0..self.extent));
        let robot = point();
        let near_origin = robot;
        let far_origin = point();
        let d1 = point();
        let d2 = point();
        let near = TaskFeature {
            origin: near_origin,
            destination: d1,
            pickup_distance: 0.0,
            length: near_origin.distance(d1),
        };
        let far = TaskFeature {
            origin: far_origin,
            destination: d2,
            pickup_distance: self.far,
            length: far_origin.distance(d2),
        };
        let tasks = if rng.random_bool(0.5) { vec![near, far] } else { vec![far, near] };
        let origin_distances = tasks.iter().map(|t| t.pickup_distance).collect();
        AllocationState {
            robots: vec![RobotFeature { position: robot, time_left: 0.0 }],
            tasks,
            selected: 0,
            origin_distances,
        }
    }
}

impl AllocationEnv for TwoTaskEnv {
    fn scenario_count(&self) -> usize {
        1
    }

    fn normalization(&self, _scenario: usize, spec: &NormalizationSpec) -> Normalization {
        spec.for_diagonal(self.extent * std::f64::consts::SQRT_2)
    }

    fn play(
        &self,
        _scenario: usize,
        seed: u64,
        actor: &mut dyn FnMut(&AllocationState) -> usize,
    ) -> Result<Vec<f64>, RlError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..self.decisions)
            .map(|_| {
                let s = self.sample_state(&mut rng);
                let a = actor(&s);
                s.tasks[a].pickup_distance
            })
            .collect())
    }

    fn optimal_action(&self, state: &AllocationState) -> Option<usize> {
        Some(crate::allocation::mpdm_select(state))
    }
}
