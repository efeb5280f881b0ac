//! Optimal reciprocal collision avoidance for disk-shaped holonomic agents.
//!
//! Each neighbour contributes one half-plane of permitted velocities; each
//! nearby obstacle contributes one more. The agent then picks the permitted
//! velocity closest to its preferred velocity (see [`solve_velocity`]).

mod lp;

pub use lp::{solve_velocity, solve_velocity_with_fixed};

use crate::geometry::{Rect, Vec2};
use crate::planner::PathFollower;

/// Tolerance used for speed-limit and unit-length checks.
pub const SPEED_EPSILON: f64 = 1e-9;
/// Distance below which an agent counts as standing on its goal.
pub const GOAL_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentBody {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub v_max: f64,
    pub v_pref: Vec2,
}

impl AgentBody {
    pub fn at_rest(position: Vec2, radius: f64, v_max: f64) -> Self {
        AgentBody { position, velocity: Vec2::ZERO, radius, v_max, v_pref: Vec2::ZERO }
    }
}

/// Permitted velocities `{ v : (v - point) . normal >= 0 }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub point: Vec2,
    pub normal: Vec2,
}

impl HalfPlane {
    /// Builds a half-plane; `normal` is normalised.
    pub fn new(point: Vec2, normal: Vec2) -> Self {
        HalfPlane { point, normal: normal.normalize_or_zero() }
    }

    pub fn contains(&self, v: Vec2, tolerance: f64) -> bool {
        (v - self.point).dot(self.normal) >= -tolerance
    }

    /// Signed distance of `v` inside the permitted side (negative = violation).
    pub fn margin(&self, v: Vec2) -> f64 {
        (v - self.point).dot(self.normal)
    }
}

/// Whether relative velocity `v_rel` brings two disks whose centers are
/// `p_rel` apart into contact at some `t` in `(0, tau]`.
pub fn in_velocity_obstacle(p_rel: Vec2, r_sum: f64, v_rel: Vec2, tau: f64) -> bool {
    let speed_sq = v_rel.length_squared();
    if speed_sq == 0.0 {
        return p_rel.length_squared() <= r_sum * r_sum;
    }
    let t = (v_rel.dot(p_rel) / speed_sq).clamp(0.0, tau);
    if t <= 0.0 {
        return p_rel.length_squared() <= r_sum * r_sum;
    }
    (v_rel * t - p_rel).length_squared() <= r_sum * r_sum
}

/// Smallest change `u` of relative velocity that reaches the boundary of the
/// truncated velocity obstacle, and the outward boundary normal `n` there.
///
/// `p_rel` is the other agent's position relative to self, `v_rel` is self's
/// velocity relative to the other. When the disks already overlap, the
/// obstacle is truncated at `dt` instead of `tau` so the pair separates
/// within one step.
pub fn escape_vector(p_rel: Vec2, v_rel: Vec2, r_sum: f64, tau: f64, dt: f64) -> (Vec2, Vec2) {
    let dist_sq = p_rel.length_squared();
    let r_sum_sq = r_sum * r_sum;
    let direction;
    let u;
    if dist_sq > r_sum_sq {
        let inv_tau = 1.0 / tau;
        let w = v_rel - p_rel * inv_tau;
        let w_len_sq = w.length_squared();
        let dot1 = w.dot(p_rel);
        if dot1 < 0.0 && dot1 * dot1 > r_sum_sq * w_len_sq {
            // Closest boundary point is on the cut-off circle.
            let w_len = w_len_sq.sqrt();
            let unit_w = w / w_len;
            direction = Vec2::new(unit_w.y, -unit_w.x);
            u = unit_w * (r_sum * inv_tau - w_len);
        } else {
            // Closest boundary point is on one of the cone legs.
            let leg = (dist_sq - r_sum_sq).sqrt();
            direction = if p_rel.det(w) > 0.0 {
                Vec2::new(p_rel.x * leg - p_rel.y * r_sum, p_rel.x * r_sum + p_rel.y * leg) / dist_sq
            } else {
                -Vec2::new(p_rel.x * leg + p_rel.y * r_sum, -p_rel.x * r_sum + p_rel.y * leg) / dist_sq
            };
            u = direction * v_rel.dot(direction) - v_rel;
        }
    } else {
        let inv_dt = 1.0 / dt;
        let w = v_rel - p_rel * inv_dt;
        let w_len = w.length();
        let unit_w = if w_len > 0.0 { w / w_len } else { (-p_rel).normalize_or_zero() };
        direction = Vec2::new(unit_w.y, -unit_w.x);
        u = unit_w * (r_sum * inv_dt - w_len);
    }
    (u, Vec2::new(-direction.y, direction.x))
}

/// Reciprocal half-plane of velocities for `me` with respect to `other`:
/// `me` takes half of the required correction, using current velocities as
/// the optimisation velocities.
pub fn orca_halfplane(me: &AgentBody, other: &AgentBody, tau: f64, dt: f64) -> HalfPlane {
    assert!(tau > 0.0 && dt > 0.0, "horizons must be positive");
    let p_rel = other.position - me.position;
    let v_rel = me.velocity - other.velocity;
    let (u, n) = escape_vector(p_rel, v_rel, me.radius + other.radius, tau, dt);
    HalfPlane { point: me.velocity + u * 0.5, normal: n }
}

/// Half-plane keeping a disk out of a static rectangle, with the agent
/// carrying full responsibility. Over `tau` the agent may approach the
/// rectangle's supporting line through its closest point by at most the
/// current gap; when already overlapping it must clear the overlap within `dt`.
pub fn obstacle_halfplane(position: Vec2, radius: f64, rect: &Rect, tau: f64, dt: f64) -> HalfPlane {
    let closest = rect.closest_point(position);
    let offset = position - closest;
    let dist = offset.length();
    let normal = if dist > 0.0 {
        offset / dist
    } else {
        // Center inside the rectangle: leave through the nearest face.
        let to_min = position - rect.min;
        let to_max = rect.max - position;
        let faces = [
            (to_min.x, Vec2::new(-1.0, 0.0)),
            (to_max.x, Vec2::new(1.0, 0.0)),
            (to_min.y, Vec2::new(0.0, -1.0)),
            (to_max.y, Vec2::new(0.0, 1.0)),
        ];
        faces.iter().min_by(|a, b| a.0.total_cmp(&b.0)).map(|f| f.1).expect("four faces")
    };
    let gap = if dist > 0.0 { dist - radius } else { -radius - closest_face_depth(position, rect) };
    let point = if gap >= 0.0 { -normal * (gap / tau) } else { normal * (-gap / dt) };
    HalfPlane { point, normal }
}

fn closest_face_depth(p: Vec2, rect: &Rect) -> f64 {
    (p.x - rect.min.x).min(rect.max.x - p.x).min(p.y - rect.min.y).min(rect.max.y - p.y)
}

/// Collision-free velocity for one agent given neighbour snapshots and
/// precomputed obstacle half-planes (which are kept hard when infeasible).
pub fn compute_velocity(
    me: &AgentBody,
    neighbors: &[AgentBody],
    obstacle_planes: &[HalfPlane],
    tau: f64,
    dt: f64,
) -> Vec2 {
    let mut planes = Vec::with_capacity(obstacle_planes.len() + neighbors.len());
    planes.extend_from_slice(obstacle_planes);
    planes.extend(neighbors.iter().map(|o| orca_halfplane(me, o, tau, dt)));
    solve_velocity_with_fixed(&planes, obstacle_planes.len(), me.v_pref, me.v_max)
}

/// Preferred velocity toward the path's look-ahead waypoint, slowed so the
/// agent cannot overshoot the final goal within one step.
pub fn preferred_velocity(
    position: Vec2,
    follower: &mut PathFollower,
    v_nominal: f64,
    dt: f64,
    lookahead: f64,
) -> Vec2 {
    let to_goal = follower.goal().distance(position);
    if to_goal <= GOAL_EPSILON {
        return Vec2::ZERO;
    }
    let target = follower.next_waypoint(position, lookahead);
    let dir = (target - position).normalize_or_zero();
    dir * v_nominal.min(to_goal / dt)
}
