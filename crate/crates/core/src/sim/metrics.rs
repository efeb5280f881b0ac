use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    RobotAvailable { robot: usize },
    /// A queued task was handed to `robot`.
    Allocated { robot: usize, task: u64 },
    PickupReached { robot: usize, task: u64, ttd: f64 },
    TaskCompleted { robot: usize, task: u64 },
    CollisionDetected { a: usize, b: usize },
    ObstacleContact { robot: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Sum of `per_task_ttd`.
    pub ttd_total: f64,
    /// Allocation-to-pickup time of every task whose pickup was reached, in
    /// pickup order.
    pub per_task_ttd: Vec<f64>,
    /// Completion time of the last counted task.
    pub makespan: f64,
    /// Inter-agent contact events.
    pub collisions: u64,
    /// Agent-obstacle contact events, kept apart from `collisions`.
    pub obstacle_contacts: u64,
    /// Smallest pairwise separation among agents within sensing range at
    /// the end of each tick (`inf` when no pair is that close).
    pub per_tick_min_separation: Vec<f64>,
    pub tasks_completed: usize,
    pub allocations: usize,
    pub ticks: u64,
}

impl Metrics {
    pub fn mean_ttd(&self) -> f64 {
        if self.per_task_ttd.is_empty() {
            0.0
        } else {
            self.ttd_total / self.per_task_ttd.len() as f64
        }
    }

    pub fn min_separation(&self) -> f64 {
        self.per_tick_min_separation.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn record_ttd(&mut self, ttd: f64) {
        self.per_task_ttd.push(ttd);
        self.ttd_total += ttd;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ttd_total_tracks_entries() {
        let mut m = Metrics::default();
        for t in [1.5, 0.0, 2.25] {
            m.record_ttd(t);
        }
        assert_eq!(m.ttd_total, m.per_task_ttd.iter().sum::<f64>());
        assert_eq!(m.mean_ttd(), 1.25);
    }

    #[test]
    fn events_serialize_flat() {
        let e = SimEvent { time: 0.5, kind: EventKind::Allocated { robot: 2, task: 7 } };
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(s, r#"{"time":0.5,"kind":"allocated","robot":2,"task":7}"#);
    }
}
