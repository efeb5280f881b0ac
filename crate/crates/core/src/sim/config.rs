use crate::geometry::Cell;
use crate::planner::DistanceMode;
use crate::world::Layout;
use serde::{Deserialize, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::SimError;

/// Low-level navigation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavMode {
    /// Straight line to the goal at the nominal speed; obstacles ignored.
    Direct,
    /// Follow the A* path at the nominal speed; other robots ignored.
    Astar,
    /// Follow the A* path at up to `v_max`, filtered through ORCA.
    AstarOrca,
}

impl NavMode {
    pub fn distance_mode(self) -> DistanceMode {
        match self {
            NavMode::Direct => DistanceMode::Direct,
            NavMode::Astar | NavMode::AstarOrca => DistanceMode::Astar,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NavMode::Direct => "direct",
            NavMode::Astar => "astar",
            NavMode::AstarOrca => "astar_orca",
        }
    }
}

impl fmt::Display for NavMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NavMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(NavMode::Direct),
            "astar" => Ok(NavMode::Astar),
            "astar_orca" | "astar+orca" => Ok(NavMode::AstarOrca),
            other => Err(format!("unknown navigation mode {other:?}")),
        }
    }
}

fn layout_name<S: Serializer>(layout: &Arc<Layout>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(layout.name())
}

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    #[serde(serialize_with = "layout_name")]
    pub layout: Arc<Layout>,
    pub n_robots: usize,
    pub queue_len: usize,
    /// Run length in completed tasks.
    pub total_tasks: usize,
    pub dt: f64,
    pub radius: f64,
    /// Speed limit for ORCA navigation.
    pub v_max: f64,
    /// Cruise speed for direct and A* navigation, and the unit for TTD accounting there.
    pub nominal_speed: f64,
    pub nav_mode: NavMode,
    pub seed: u64,
    /// Goal tolerance under ORCA navigation. Direct and A* agents land exactly on goals.
    pub arrival_threshold: f64,
    /// Ticks without a task completion before a run is declared deadlocked.
    pub stall_ticks: u64,
    /// ORCA horizon between agents.
    pub time_horizon: f64,
    /// ORCA horizon against static obstacles.
    pub obstacle_horizon: f64,
    pub sensing_radius: f64,
    pub max_neighbors: usize,
    /// Waypoint look-ahead distance for path following.
    pub lookahead: f64,
    /// Use the rayon pool for per-agent velocity computation.
    pub parallel: bool,
    /// Fixed start cells, one per robot, instead of seeded placement.
    pub start_cells: Option<Vec<Cell>>,
}

impl SimConfig {
    pub fn new(layout: Arc<Layout>) -> Self {
        SimConfig {
            layout,
            n_robots: 10,
            queue_len: 10,
            total_tasks: 500,
            dt: 0.25,
            radius: 1.5,
            v_max: 2.0,
            nominal_speed: 1.0,
            nav_mode: NavMode::Astar,
            seed: 0,
            arrival_threshold: 0.5,
            stall_ticks: 100_000,
            time_horizon: 2.0,
            obstacle_horizon: 1.0,
            sensing_radius: 10.0,
            max_neighbors: 10,
            lookahead: 2.0,
            parallel: true,
            start_cells: None,
        }
    }

    /// Speed agents travel at under this configuration's navigation mode.
    pub fn cruise_speed(&self) -> f64 {
        match self.nav_mode {
            NavMode::Direct | NavMode::Astar => self.nominal_speed,
            NavMode::AstarOrca => self.v_max,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidConfig(msg.to_string()));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.dt) {
            return bad("dt must be positive");
        }
        if !positive(self.radius) {
            return bad("radius must be positive");
        }
        if !positive(self.v_max) {
            return bad("v_max must be positive");
        }
        if !positive(self.nominal_speed) {
            return bad("nominal_speed must be positive");
        }
        if self.nominal_speed > self.v_max {
            return bad("nominal_speed must not exceed v_max");
        }
        if self.n_robots == 0 {
            return bad("n_robots must be at least 1");
        }
        if self.queue_len == 0 {
            return bad("queue_len must be at least 1");
        }
        if self.total_tasks == 0 {
            return bad("total_tasks must be at least 1");
        }
        if !(self.arrival_threshold >= 0.0) {
            return bad("arrival_threshold must be non-negative");
        }
        if !positive(self.time_horizon) || !positive(self.obstacle_horizon) {
            return bad("ORCA horizons must be positive");
        }
        if !(self.sensing_radius >= 0.0) || !(self.lookahead > 0.0) {
            return bad("sensing radius and lookahead must be positive");
        }
        if self.stall_ticks == 0 {
            return bad("stall_ticks must be positive");
        }
        if let Some(cells) = &self.start_cells {
            if cells.len() != self.n_robots {
                return bad("start_cells must list one cell per robot");
            }
            if let Some(c) = cells.iter().find(|c| !self.layout.is_free(**c)) {
                return Err(SimError::InvalidConfig(format!("start cell ({}, {}) is not free", c.x, c.y)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::load_layout;

    fn config() -> SimConfig {
        SimConfig::new(Arc::new(load_layout("P.\n.D\n").unwrap()))
    }

    #[test]
    fn defaults_validate() {
        let c = config();
        c.validate().unwrap();
        assert_eq!((c.dt, c.radius, c.v_max, c.queue_len), (0.25, 1.5, 2.0, 10));
    }

    #[test]
    fn zero_tasks_rejected() {
        let mut c = config();
        c.total_tasks = 0;
        assert!(matches!(c.validate(), Err(SimError::InvalidConfig(_))));
    }

    #[test]
    fn nav_mode_parsing() {
        assert_eq!("astar_orca".parse::<NavMode>().unwrap(), NavMode::AstarOrca);
        assert!("walk".parse::<NavMode>().is_err());
        assert_eq!(NavMode::Direct.distance_mode(), DistanceMode::Direct);
    }
}
