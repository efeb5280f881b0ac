#![allow(dead_code)]

use dcmrta::allocation::{AllocationState, RobotFeature, TaskFeature};
use dcmrta::geometry::{Cell, Vec2};
use dcmrta::orca::{compute_velocity, AgentBody};
use dcmrta::world::Layout;
use rand::Rng;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Path length as `orth + diag * sqrt(2)` with exact comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepCount {
    pub orth: u64,
    pub diag: u64,
}

impl StepCount {
    pub fn length(self) -> f64 {
        self.orth as f64 + self.diag as f64 * std::f64::consts::SQRT_2
    }
}

impl Ord for StepCount {
    // a + b*sqrt2 vs c + d*sqrt2  <=>  (a - c) vs (d - b)*sqrt2, decided on
    // integers by comparing squares with signs.
    fn cmp(&self, o: &Self) -> Ordering {
        let x = self.orth as i128 - o.orth as i128;
        let y = o.diag as i128 - self.diag as i128;
        let sign = |v: i128| v.signum();
        match (sign(x), sign(y)) {
            (0, 0) => Ordering::Equal,
            (sx, sy) if sx != sy => sx.cmp(&sy),
            (1, 1) => (x * x).cmp(&(2 * y * y)),
            _ => (2 * y * y).cmp(&(x * x)),
        }
    }
}

impl PartialOrd for StepCount {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn free(layout: &Layout, x: i32, y: i32) -> bool {
    x >= 0 && y >= 0 && (x as usize) < layout.width() && (y as usize) < layout.height() && layout.is_free(Cell::new(x, y))
}

/// Plain Dijkstra over the 8-connected free grid, diagonal moves only when
/// both side cells are free. Returns the exact shortest step count.
pub fn dijkstra(layout: &Layout, start: Cell, goal: Cell) -> Option<StepCount> {
    if !free(layout, start.x, start.y) || !free(layout, goal.x, goal.y) {
        return None;
    }
    let w = layout.width();
    let idx = |x: i32, y: i32| y as usize * w + x as usize;
    let mut best: Vec<Option<StepCount>> = vec![None; w * layout.height()];
    let mut heap = BinaryHeap::new();
    let zero = StepCount { orth: 0, diag: 0 };
    best[idx(start.x, start.y)] = Some(zero);
    heap.push(std::cmp::Reverse((zero, start.x, start.y)));
    while let Some(std::cmp::Reverse((d, x, y))) = heap.pop() {
        if best[idx(x, y)] != Some(d) {
            continue;
        }
        if (x, y) == (goal.x, goal.y) {
            return Some(d);
        }
        for dx in -1..=1 {
            for dy in -1..=1 {
                if (dx, dy) == (0, 0) || !free(layout, x + dx, y + dy) {
                    continue;
                }
                let diag = dx != 0 && dy != 0;
                if diag && !(free(layout, x + dx, y) && free(layout, x, y + dy)) {
                    continue;
                }
                let nd = if diag { StepCount { diag: d.diag + 1, ..d } } else { StepCount { orth: d.orth + 1, ..d } };
                let slot = &mut best[idx(x + dx, y + dy)];
                if slot.is_none_or(|old| nd < old) {
                    *slot = Some(nd);
                    heap.push(std::cmp::Reverse((nd, x + dx, y + dy)));
                }
            }
        }
    }
    None
}

pub fn brute_mpdm(state: &AllocationState) -> usize {
    let mut best = 0;
    for i in 1..state.tasks.len() {
        if state.tasks[i].pickup_distance < state.tasks[best].pickup_distance {
            best = i;
        }
    }
    best
}

/// Regret `min_j dist(j, o_i) - k_i`, maximised, ties to the lowest index.
pub fn brute_rbts(state: &AllocationState) -> usize {
    let n = state.tasks.len();
    let regret = |i: usize| {
        let mut closest = f64::INFINITY;
        for j in 0..state.robots.len() {
            closest = closest.min(state.origin_distances[j * n + i]);
        }
        closest - state.tasks[i].pickup_distance
    };
    let mut best = 0;
    for i in 1..n {
        if regret(i) > regret(best) {
            best = i;
        }
    }
    best
}

/// Random decision state; distances are drawn from a small integer set so
/// ties are frequent.
pub fn random_state<R: Rng>(rng: &mut R, max_robots: usize, max_tasks: usize) -> AllocationState {
    let m = rng.random_range(1..=max_robots);
    let n = rng.random_range(1..=max_tasks);
    let selected = rng.random_range(0..m);
    let point = |rng: &mut R| Vec2::new(rng.random_range(0.0..60.0), rng.random_range(0.0..60.0));
    let robots = (0..m)
        .map(|j| RobotFeature {
            position: point(rng),
            time_left: if j == selected { 0.0 } else { rng.random_range(0.0..30.0) },
        })
        .collect();
    let origin_distances: Vec<f64> = (0..m * n).map(|_| rng.random_range(0..12) as f64 * 0.5).collect();
    let tasks = (0..n)
        .map(|i| TaskFeature {
            origin: point(rng),
            destination: point(rng),
            pickup_distance: origin_distances[selected * n + i],
            length: rng.random_range(1.0..40.0),
        })
        .collect();
    AllocationState { robots, tasks, selected, origin_distances }
}

#[derive(Debug, Clone, Copy)]
pub enum EncounterKind {
    HeadOn,
    Crossing,
    Overtaking,
}

#[derive(Debug, Clone, Copy)]
pub struct Encounter {
    pub kind: EncounterKind,
    pub start: [Vec2; 2],
    pub goal: [Vec2; 2],
    pub speed: [f64; 2],
}

pub const RADIUS: f64 = 1.5;
pub const V_MAX: f64 = 2.0;
pub const DT: f64 = 0.25;
pub const TAU: f64 = 2.0;

pub fn random_encounter<R: Rng>(rng: &mut R, kind: EncounterKind) -> Encounter {
    let heading = rng.random_range(0.0..std::f64::consts::TAU);
    let dir = Vec2::new(heading.cos(), heading.sin());
    let side = dir.perp();
    match kind {
        EncounterKind::HeadOn => {
            let half = rng.random_range(5.0..15.0);
            let offset = side * rng.random_range(-1.0..1.0);
            Encounter {
                kind,
                start: [dir * -half, dir * half + offset],
                goal: [dir * half, dir * -half + offset],
                speed: [V_MAX, rng.random_range(1.0..=V_MAX)],
            }
        }
        EncounterKind::Crossing => {
            let angle = rng.random_range(0.5..2.6);
            let other = dir.rotated(angle);
            let (la, lb) = (rng.random_range(6.0..14.0), rng.random_range(6.0..14.0));
            let (sa, sb) = (rng.random_range(1.0..=V_MAX), rng.random_range(1.0..=V_MAX));
            Encounter { kind, start: [dir * -la, other * -lb], goal: [dir * la, other * lb], speed: [sa, sb] }
        }
        EncounterKind::Overtaking => {
            let gap = rng.random_range(4.0..8.0);
            let offset = side * rng.random_range(-1.0..1.0);
            Encounter {
                kind,
                start: [Vec2::ZERO, dir * gap + offset],
                goal: [dir * 40.0, dir * 30.0 + offset],
                speed: [V_MAX, rng.random_range(0.3..1.0)],
            }
        }
    }
}

/// Plays the encounter with both agents running ORCA from the same frozen
/// state each tick; returns the smallest centre distance seen after any tick.
pub fn min_separation(e: &Encounter, ticks: usize) -> f64 {
    let mut bodies = [0, 1].map(|i| AgentBody::at_rest(e.start[i], RADIUS, V_MAX));
    let mut min_sep = f64::INFINITY;
    for _ in 0..ticks {
        for i in 0..2 {
            let to_goal = e.goal[i] - bodies[i].position;
            let d = to_goal.length();
            bodies[i].v_pref = to_goal.normalize_or_zero() * e.speed[i].min(d / DT);
        }
        let v = [0, 1].map(|i| compute_velocity(&bodies[i], &[bodies[1 - i]], &[], TAU, DT));
        for i in 0..2 {
            bodies[i].velocity = v[i];
            bodies[i].position = bodies[i].position + v[i] * DT;
        }
        min_sep = min_sep.min(bodies[0].position.distance(bodies[1].position));
    }
    min_sep
}
