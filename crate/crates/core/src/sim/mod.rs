//! Discrete-time fleet simulation: navigation, pickup/delivery bookkeeping,
//! allocation on robot availability, and metrics.
//!
//! Each [`Simulation::tick`] runs in two phases. Every agent first picks a
//! velocity from a frozen snapshot of the fleet (this part may run in
//! parallel); positions are then integrated and arrivals, contacts and
//! allocations are processed serially in robot-id order.

pub mod collision;
mod config;
mod metrics;

pub use config::{NavMode, SimConfig};
pub use metrics::{EventKind, Metrics, SimEvent};

use crate::allocation::{build_state, Allocator, RobotFeature};
use crate::exec;
use crate::geometry::{Cell, Vec2};
use crate::orca::{compute_velocity, obstacle_halfplane, preferred_velocity, AgentBody, HalfPlane, GOAL_EPSILON};
use crate::planner::{nearest_free, Path, PathCache, PathFollower};
use crate::world::{Layout, Task, TaskError, TaskQueue};
use collision::{ContactTracker, ObstacleIndex, SpatialGrid, RELEASE_FACTOR};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::Write;
use std::sync::Arc;
use thiserror::Error;

/// Below this many agents the velocity phase always runs inline.
pub const PARALLEL_MIN_AGENTS: usize = 32;

/// Angle (radians) by which the ORCA preference is tilted when neighbours
/// are in range.
pub const SYMMETRY_TILT: f64 = 0.1;

/// Random stream `stream` of the generator seeded with `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const PLACEMENT_STREAM: u64 = 1;
const TASK_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("could only place {placed} of {needed} robots without overlap")]
    Placement { needed: usize, placed: usize },
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("deadlock: no task completed for {stalled_ticks} ticks (t = {time} s, {completed} tasks done)")]
    Deadlock { time: f64, completed: usize, stalled_ticks: u64 },
    #[error("allocator {allocator} returned task index {index} for a queue of {n_tasks}")]
    BadAction { allocator: String, index: usize, n_tasks: usize },
    #[error("simulation already finished")]
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Phase {
    Idle,
    ToPickup(Task),
    ToDropoff(Task),
}

impl Phase {
    pub fn label(&self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::ToPickup(_) => "to_pickup",
            Phase::ToDropoff(_) => "to_dropoff",
        }
    }

    pub fn task(&self) -> Option<&Task> {
        match self {
            Phase::Idle => None,
            Phase::ToPickup(t) | Phase::ToDropoff(t) => Some(t),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AgentState {
    pub id: usize,
    pub body: AgentBody,
    pub phase: Phase,
    follower: Option<PathFollower>,
    /// Estimated seconds to finish the current task (`r_j`).
    pub time_left: f64,
    pub allocation_time: f64,
    /// Origin-to-destination distance of the current task.
    delivery_length: f64,
}

impl AgentState {
    pub fn path(&self) -> Option<&Path> {
        self.follower.as_ref().map(|f| f.path())
    }

    pub fn follower(&self) -> Option<&PathFollower> {
        self.follower.as_ref()
    }
}

pub const TRAJECTORY_HEADER: [&str; 7] = ["tick", "robot_id", "x", "y", "vx", "vy", "phase"];

pub struct Simulation {
    config: SimConfig,
    plan_layout: Arc<Layout>,
    obstacles: ObstacleIndex,
    cache: PathCache,
    plan_cache: PathCache,
    agents: Vec<AgentState>,
    queue: TaskQueue,
    task_rng: ChaCha8Rng,
    grid: SpatialGrid,
    contacts: ContactTracker,
    metrics: Metrics,
    tick: u64,
    last_completion_tick: u64,
    started: bool,
}

impl Simulation {
    /// Places the robots and fills the task queue. No allocation happens
    /// until [`Simulation::start`].
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let layout = Arc::clone(&config.layout);
        let plan_layout = match config.nav_mode {
            NavMode::AstarOrca => Arc::new(layout.inflated(config.radius)),
            _ => Arc::clone(&layout),
        };
        let mut placement_rng = rng_stream(config.seed, PLACEMENT_STREAM);
        let starts = place_robots(&config, &mut placement_rng)?;
        let agents = starts
            .into_iter()
            .enumerate()
            .map(|(id, p)| AgentState {
                id,
                body: AgentBody::at_rest(p, config.radius, config.v_max),
                phase: Phase::Idle,
                follower: None,
                time_left: 0.0,
                allocation_time: 0.0,
                delivery_length: 0.0,
            })
            .collect::<Vec<_>>();
        let mut task_rng = rng_stream(config.seed, TASK_STREAM);
        let mut queue = TaskQueue::new(config.queue_len);
        queue.fill(&layout, &mut task_rng, 0.0)?;
        let bucket = config.sensing_radius.max(2.0 * RELEASE_FACTOR * config.radius);
        let grid = SpatialGrid::new(layout.width() as f64, layout.height() as f64, bucket);
        let n = agents.len();
        Ok(Simulation {
            obstacles: ObstacleIndex::new(&layout),
            plan_layout,
            cache: PathCache::default(),
            plan_cache: PathCache::default(),
            agents,
            queue,
            task_rng,
            grid,
            contacts: ContactTracker::new(n),
            metrics: Metrics::default(),
            tick: 0,
            last_completion_tick: 0,
            started: false,
            config,
        })
    }

    /// Initial allocation burst: every robot, in id order, becomes available
    /// at `t = 0` and receives a task.
    pub fn start(&mut self, allocator: &mut dyn Allocator) -> Result<Vec<SimEvent>, SimError> {
        if self.started {
            return Err(SimError::Finished);
        }
        self.started = true;
        let mut events = Vec::new();
        for j in 0..self.agents.len() {
            events.push(SimEvent { time: 0.0, kind: EventKind::RobotAvailable { robot: j } });
            self.allocate(j, allocator, &mut events)?;
        }
        self.refresh_time_left();
        Ok(events)
    }

    /// [`Simulation::new`] followed by [`Simulation::start`].
    pub fn init(config: SimConfig, allocator: &mut dyn Allocator) -> Result<(Self, Vec<SimEvent>), SimError> {
        let mut sim = Simulation::new(config)?;
        let events = sim.start(allocator)?;
        Ok((sim, events))
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.config.layout
    }

    /// Grid used for agent path planning (inflated by the radius under ORCA).
    pub fn plan_layout(&self) -> &Layout {
        &self.plan_layout
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn queue(&self) -> &TaskQueue {
        &self.queue
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn into_metrics(self) -> Metrics {
        self.metrics
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.config.dt
    }

    pub fn is_finished(&self) -> bool {
        self.metrics.tasks_completed >= self.config.total_tasks
    }

    pub fn allocated_count(&self) -> usize {
        self.metrics.allocations
    }

    pub fn completed_count(&self) -> usize {
        self.metrics.tasks_completed
    }

    pub fn in_progress_count(&self) -> usize {
        self.agents.iter().filter(|a| a.phase != Phase::Idle).count()
    }

    /// Robot tuples `(p_j, r_j)` for the whole fleet.
    pub fn robot_features(&self) -> Vec<RobotFeature> {
        self.agents
            .iter()
            .map(|a| RobotFeature { position: a.body.position, time_left: a.time_left })
            .collect()
    }

    /// Advances the simulation by one step of `dt`.
    pub fn tick(&mut self, allocator: &mut dyn Allocator) -> Result<Vec<SimEvent>, SimError> {
        if !self.started || self.is_finished() {
            return Err(SimError::Finished);
        }
        let orca = self.config.nav_mode == NavMode::AstarOrca;
        if orca {
            self.replan_displaced();
        }

        // Phase 1: velocities from the frozen snapshot.
        let bodies: Vec<AgentBody> = self.agents.iter().map(|a| a.body).collect();
        let positions: Vec<Vec2> = bodies.iter().map(|b| b.position).collect();
        if orca {
            self.grid.rebuild(positions.iter().copied());
        }
        let ctx = VelocityContext {
            config: &self.config,
            grid: &self.grid,
            obstacles: &self.obstacles,
            bodies: &bodies,
            positions: &positions,
        };
        let parallel = self.config.parallel && self.agents.len() >= PARALLEL_MIN_AGENTS;
        let choices = exec::map_mut(&mut self.agents, parallel, |i, a| ctx.choose(i, a));

        // Phase 2: integrate.
        let dt = self.config.dt;
        for (a, (v_pref, v)) in self.agents.iter_mut().zip(choices) {
            a.body.v_pref = v_pref;
            a.body.velocity = v;
            a.body.position += v * dt;
        }
        self.tick += 1;
        let now = self.time();
        let mut events = Vec::new();

        let mut available = Vec::new();
        for i in 0..self.agents.len() {
            if self.is_finished() {
                break;
            }
            if self.check_arrival(i, now, &mut events)? {
                available.push(i);
            }
        }

        self.detect_contacts(now, &mut events);

        for j in available {
            events.push(SimEvent { time: now, kind: EventKind::RobotAvailable { robot: j } });
            self.allocate(j, allocator, &mut events)?;
        }
        self.refresh_time_left();
        self.metrics.ticks = self.tick;

        let stalled = self.tick - self.last_completion_tick;
        if !self.is_finished() && stalled >= self.config.stall_ticks {
            return Err(SimError::Deadlock {
                time: now,
                completed: self.metrics.tasks_completed,
                stalled_ticks: stalled,
            });
        }
        Ok(events)
    }

    /// Ticks until the configured number of tasks is complete, calling
    /// `observer` after the start burst and after every tick.
    pub fn run_with(
        &mut self,
        allocator: &mut dyn Allocator,
        mut observer: impl FnMut(&Simulation, &[SimEvent]),
    ) -> Result<(), SimError> {
        if !self.started {
            let events = self.start(allocator)?;
            observer(self, &events);
        }
        while !self.is_finished() {
            let events = self.tick(allocator)?;
            observer(self, &events);
        }
        Ok(())
    }

    /// Appends one trajectory row per robot for the current tick.
    pub fn write_trajectory<W: Write>(&self, out: &mut csv::Writer<W>) -> csv::Result<()> {
        for a in &self.agents {
            out.write_record([
                self.tick.to_string(),
                a.id.to_string(),
                a.body.position.x.to_string(),
                a.body.position.y.to_string(),
                a.body.velocity.x.to_string(),
                a.body.velocity.y.to_string(),
                a.phase.label().to_string(),
            ])?;
        }
        Ok(())
    }

    fn allocate(&mut self, j: usize, allocator: &mut dyn Allocator, events: &mut Vec<SimEvent>) -> Result<(), SimError> {
        debug_assert_eq!(self.agents[j].phase, Phase::Idle);
        debug_assert_eq!(self.queue.len(), self.config.queue_len);
        let now = self.time();
        let robots = self.robot_features();
        let state = build_state(
            &self.config.layout,
            &mut self.cache,
            &robots,
            self.queue.tasks(),
            j,
            self.config.nav_mode.distance_mode(),
        );
        state.assert_valid();
        let index = allocator.select(&state);
        if index >= state.n_tasks() {
            return Err(SimError::BadAction {
                allocator: allocator.name().to_string(),
                index,
                n_tasks: state.n_tasks(),
            });
        }
        let task = self.queue.take(index, &self.config.layout, &mut self.task_rng, now)?;
        self.metrics.allocations += 1;
        events.push(SimEvent { time: now, kind: EventKind::Allocated { robot: j, task: task.id } });

        let position = self.agents[j].body.position;
        let follower = self.plan(position, task.origin);
        let a = &mut self.agents[j];
        a.phase = Phase::ToPickup(task);
        a.allocation_time = now;
        a.delivery_length = state.tasks[index].length;
        a.follower = Some(follower);
        // A robot already standing on the pickup has zero travel delay.
        self.check_arrival(j, now, events)?;
        Ok(())
    }

    /// Handles a goal arrival of agent `i`; returns `true` when the agent
    /// just completed a task and needs a new one.
    fn check_arrival(&mut self, i: usize, now: f64, events: &mut Vec<SimEvent>) -> Result<bool, SimError> {
        let kinematic = self.config.nav_mode != NavMode::AstarOrca;
        let threshold = if kinematic { GOAL_EPSILON } else { self.config.arrival_threshold };
        let Some(goal) = self.agents[i].follower.as_ref().map(|f| f.goal()) else {
            return Ok(false);
        };
        if self.agents[i].body.position.distance(goal) > threshold {
            return Ok(false);
        }
        if kinematic {
            self.agents[i].body.position = goal;
        }
        match self.agents[i].phase {
            Phase::Idle => Ok(false),
            Phase::ToPickup(task) => {
                let ttd = now - self.agents[i].allocation_time;
                self.metrics.record_ttd(ttd);
                events.push(SimEvent { time: now, kind: EventKind::PickupReached { robot: i, task: task.id, ttd } });
                let follower = self.plan(self.agents[i].body.position, task.destination);
                let a = &mut self.agents[i];
                a.phase = Phase::ToDropoff(task);
                a.follower = Some(follower);
                Ok(false)
            }
            Phase::ToDropoff(task) => {
                self.metrics.tasks_completed += 1;
                self.metrics.makespan = now;
                self.last_completion_tick = self.tick;
                events.push(SimEvent { time: now, kind: EventKind::TaskCompleted { robot: i, task: task.id } });
                let a = &mut self.agents[i];
                a.phase = Phase::Idle;
                a.follower = None;
                a.time_left = 0.0;
                a.delivery_length = 0.0;
                Ok(!self.is_finished())
            }
        }
    }

    fn plan(&mut self, from: Vec2, goal: Cell) -> PathFollower {
        let layout = &self.config.layout;
        let path = match self.config.nav_mode {
            NavMode::Direct => None,
            NavMode::Astar => start_cell(layout, from).and_then(|s| self.cache.path(layout, s, goal)),
            NavMode::AstarOrca => {
                let inflated = if self.plan_layout.is_free(goal) {
                    start_cell(&self.plan_layout, from).and_then(|s| self.plan_cache.path(&self.plan_layout, s, goal))
                } else {
                    None
                };
                inflated.or_else(|| start_cell(layout, from).and_then(|s| self.cache.path(layout, s, goal)))
            }
        };
        let path = path.unwrap_or_else(|| Arc::new(Path::straight(from, goal.center())));
        PathFollower::new(path)
    }

    /// Replans agents that ORCA has pushed well away from their waypoints.
    fn replan_displaced(&mut self) {
        let limit = self.config.lookahead + 1.5;
        for i in 0..self.agents.len() {
            let a = &self.agents[i];
            let Some(f) = &a.follower else { continue };
            let target = f.path().waypoints[f.cursor()];
            if target.distance(a.body.position) > limit {
                let goal = Cell::containing(f.goal());
                let position = a.body.position;
                let follower = self.plan(position, goal);
                self.agents[i].follower = Some(follower);
            }
        }
    }

    fn detect_contacts(&mut self, now: f64, events: &mut Vec<SimEvent>) {
        let positions: Vec<Vec2> = self.agents.iter().map(|a| a.body.position).collect();
        self.grid.rebuild(positions.iter().copied());
        let contact = 2.0 * self.config.radius;
        let range = self.config.sensing_radius.max(RELEASE_FACTOR * contact);
        let mut min_sep = f64::INFINITY;
        let mut near = Vec::new();
        for i in 0..positions.len() {
            near.clear();
            self.grid.for_each_near(positions[i], range, |j| {
                if j > i {
                    near.push(j);
                }
            });
            near.sort_unstable();
            for &j in &near {
                let sep = positions[i].distance(positions[j]);
                if sep <= self.config.sensing_radius {
                    min_sep = min_sep.min(sep);
                }
                if self.contacts.observe_pair(i, j, sep, contact) {
                    self.metrics.collisions += 1;
                    events.push(SimEvent { time: now, kind: EventKind::CollisionDetected { a: i, b: j } });
                }
            }
        }
        self.contacts.release_pairs(contact, |a, b| positions[a].distance(positions[b]));
        self.metrics.per_tick_min_separation.push(min_sep);

        let radius = self.config.radius;
        let mut scratch = Vec::new();
        for (i, &p) in positions.iter().enumerate() {
            let clearance = self.obstacles.clearance(&self.config.layout, p, RELEASE_FACTOR * radius, &mut scratch);
            if self.contacts.observe_obstacle(i, clearance, radius) {
                self.metrics.obstacle_contacts += 1;
                events.push(SimEvent { time: now, kind: EventKind::ObstacleContact { robot: i } });
            }
        }
    }

    fn refresh_time_left(&mut self) {
        let speed = self.config.cruise_speed();
        for a in &mut self.agents {
            a.time_left = match (&a.phase, &a.follower) {
                (Phase::ToPickup(_), Some(f)) => (f.remaining_length(a.body.position) + a.delivery_length) / speed,
                (Phase::ToDropoff(_), Some(f)) => f.remaining_length(a.body.position) / speed,
                _ => 0.0,
            };
        }
    }
}

/// Runs one full simulation and returns its metrics.
pub fn run(config: SimConfig, allocator: &mut dyn Allocator) -> Result<Metrics, SimError> {
    let mut sim = Simulation::new(config)?;
    sim.run_with(allocator, |_, _| {})?;
    Ok(sim.into_metrics())
}

struct VelocityContext<'a> {
    config: &'a SimConfig,
    grid: &'a SpatialGrid,
    obstacles: &'a ObstacleIndex,
    bodies: &'a [AgentBody],
    positions: &'a [Vec2],
}

impl VelocityContext<'_> {
    /// Preferred and chosen velocity for agent `i`.
    fn choose(&self, i: usize, agent: &mut AgentState) -> (Vec2, Vec2) {
        let c = self.config;
        let position = agent.body.position;
        let v_pref = match &mut agent.follower {
            Some(f) => preferred_velocity(position, f, c.cruise_speed(), c.dt, c.lookahead),
            None => Vec2::ZERO,
        };
        if c.nav_mode != NavMode::AstarOrca {
            return (v_pref, v_pref);
        }
        let neighbors: Vec<AgentBody> = self
            .grid
            .nearest(self.positions, i, c.sensing_radius, c.max_neighbors)
            .into_iter()
            .map(|j| self.bodies[j])
            .collect();
        let mut near = Vec::new();
        let range = c.radius + c.v_max * c.obstacle_horizon;
        self.obstacles.near(&c.layout, position, range, &mut near);
        let planes: Vec<HalfPlane> = near
            .iter()
            .map(|&r| obstacle_halfplane(position, c.radius, &self.obstacles.rects()[r], c.obstacle_horizon, c.dt))
            .collect();
        // Perfectly symmetric encounters (e.g. collinear head-on) otherwise
        // stall with both agents braking; a slight clockwise tilt of the
        // preference makes every agent pass on the same side.
        let tilted = if neighbors.is_empty() { v_pref } else { v_pref.rotated(-SYMMETRY_TILT) };
        let me = AgentBody { v_pref: tilted, ..agent.body };
        (v_pref, compute_velocity(&me, &neighbors, &planes, c.time_horizon, c.dt))
    }
}

fn start_cell(layout: &Layout, p: Vec2) -> Option<Cell> {
    let c = Cell::containing(p);
    if layout.is_free(c) {
        Some(c)
    } else {
        nearest_free(layout, c)
    }
}

/// Seeded non-overlapping start positions at cell centers.
fn place_robots(config: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec2>, SimError> {
    if let Some(cells) = &config.start_cells {
        return Ok(cells.iter().map(|c| c.center()).collect());
    }
    let layout = &config.layout;
    let root = layout.pickup_region().first().or(layout.delivery_region().first()).copied();
    let reach = root.map(|r| layout.reachable_from(r));
    let reachable: Vec<Cell> = layout
        .free_cells()
        .filter(|&c| reach.as_ref().is_none_or(|r| r[layout.index(c)]))
        .collect();
    let roomy: Vec<Cell> = reachable
        .iter()
        .copied()
        .filter(|&c| layout.clearance_capped(c, config.radius) >= config.radius - 1e-9)
        .collect();
    let mut best = 0;
    for candidates in [roomy, reachable] {
        let placed = greedy_place(layout, candidates, config.n_robots, config.radius, rng);
        if placed.len() == config.n_robots {
            return Ok(placed.into_iter().map(|c| c.center()).collect());
        }
        best = best.max(placed.len());
    }
    Err(SimError::Placement { needed: config.n_robots, placed: best })
}

fn greedy_place(layout: &Layout, mut candidates: Vec<Cell>, n: usize, radius: f64, rng: &mut ChaCha8Rng) -> Vec<Cell> {
    candidates.shuffle(rng);
    let min_d2 = 4.0 * radius * radius;
    let reach = (2.0 * radius).ceil() as i32;
    let mut taken = vec![false; layout.width() * layout.height()];
    let mut placed = Vec::with_capacity(n);
    for c in candidates {
        if placed.len() == n {
            break;
        }
        let mut ok = true;
        'scan: for dy in -reach..=reach {
            for dx in -reach..=reach {
                let o = Cell::new(c.x + dx, c.y + dy);
                if layout.in_bounds(o) && taken[layout.index(o)] && ((dx * dx + dy * dy) as f64) < min_d2 {
                    ok = false;
                    break 'scan;
                }
            }
        }
        if ok {
            taken[layout.index(c)] = true;
            placed.push(c);
        }
    }
    placed
}
