// Incremental 2-D linear programming over half-planes intersected with a
// speed disk, following the randomized-incremental scheme used by RVO2
// (deterministic order here). The objective is "closest point to the
// preferred velocity"; when the constraints are infeasible a lifted 3-D
// program minimizes the largest violation instead.

use super::HalfPlane;
use crate::geometry::Vec2;

const LP_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
struct Line {
    point: Vec2,
    direction: Vec2,
}

impl From<&HalfPlane> for Line {
    fn from(h: &HalfPlane) -> Line {
        // Allowed side is to the left of `direction`.
        Line { point: h.point, direction: Vec2::new(h.normal.y, -h.normal.x) }
    }
}

/// Optimizes on the boundary of line `line_no` subject to lines `0..line_no`
/// and the disk. Returns `false` when that segment is empty.
fn linear_program1(
    lines: &[Line],
    line_no: usize,
    radius: f64,
    opt: Vec2,
    direction_opt: bool,
    result: &mut Vec2,
) -> bool {
    let line = lines[line_no];
    let dot = line.point.dot(line.direction);
    let discriminant = dot * dot + radius * radius - line.point.length_squared();
    if discriminant < 0.0 {
        return false;
    }
    let sqrt_disc = discriminant.sqrt();
    let mut t_left = -dot - sqrt_disc;
    let mut t_right = -dot + sqrt_disc;

    for other in &lines[..line_no] {
        let denominator = line.direction.det(other.direction);
        let numerator = other.direction.det(line.point - other.point);
        if denominator.abs() <= LP_EPSILON {
            if numerator < 0.0 {
                return false;
            }
            continue;
        }
        let t = numerator / denominator;
        if denominator >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return false;
        }
    }

    let t = if direction_opt {
        if opt.dot(line.direction) > 0.0 {
            t_right
        } else {
            t_left
        }
    } else {
        line.direction.dot(opt - line.point).clamp(t_left, t_right)
    };
    *result = line.point + line.direction * t;
    true
}

/// Returns the number of lines satisfied before the first failure
/// (`lines.len()` on success).
fn linear_program2(lines: &[Line], radius: f64, opt: Vec2, direction_opt: bool, result: &mut Vec2) -> usize {
    *result = if direction_opt {
        opt * radius
    } else if opt.length_squared() > radius * radius {
        opt.normalize_or_zero() * radius
    } else {
        opt
    };
    for i in 0..lines.len() {
        if lines[i].direction.det(lines[i].point - *result) > 0.0 {
            let saved = *result;
            if !linear_program1(lines, i, radius, opt, direction_opt, result) {
                *result = saved;
                return i;
            }
        }
    }
    lines.len()
}

fn linear_program3(lines: &[Line], fixed: usize, begin: usize, radius: f64, result: &mut Vec2) {
    let mut distance = 0.0;
    for i in begin..lines.len() {
        if lines[i].direction.det(lines[i].point - *result) <= distance {
            continue;
        }
        let mut projected: Vec<Line> = lines[..fixed].to_vec();
        for j in fixed..i {
            let determinant = lines[i].direction.det(lines[j].direction);
            let point = if determinant.abs() <= LP_EPSILON {
                if lines[i].direction.dot(lines[j].direction) > 0.0 {
                    continue;
                }
                (lines[i].point + lines[j].point) * 0.5
            } else {
                lines[i].point
                    + lines[i].direction
                        * (lines[j].direction.det(lines[i].point - lines[j].point) / determinant)
            };
            let direction = (lines[j].direction - lines[i].direction).normalize_or_zero();
            projected.push(Line { point, direction });
        }
        let saved = *result;
        let opt = Vec2::new(-lines[i].direction.y, lines[i].direction.x);
        if linear_program2(&projected, radius, opt, true, result) < projected.len() {
            // Only possible through rounding; keep the previous answer.
            *result = saved;
        }
        distance = lines[i].direction.det(lines[i].point - *result);
    }
}

/// Closest velocity to `v_pref` inside every half-plane and the disk
/// `|v| <= v_max`. The first `fixed` half-planes are treated as hard
/// constraints when the full set is infeasible; the remaining ones are then
/// relaxed uniformly by the smallest amount that admits a solution.
pub fn solve_velocity_with_fixed(halfplanes: &[HalfPlane], fixed: usize, v_pref: Vec2, v_max: f64) -> Vec2 {
    assert!(v_max > 0.0, "v_max must be positive");
    let lines: Vec<Line> = halfplanes.iter().map(Line::from).collect();
    let mut result = Vec2::ZERO;
    let failed = linear_program2(&lines, v_max, v_pref, false, &mut result);
    if failed < lines.len() {
        linear_program3(&lines, fixed.min(lines.len()), failed, v_max, &mut result);
    }
    result.clamp_length(v_max)
}

/// [`solve_velocity_with_fixed`] with every constraint relaxable.
pub fn solve_velocity(halfplanes: &[HalfPlane], v_pref: Vec2, v_max: f64) -> Vec2 {
    solve_velocity_with_fixed(halfplanes, 0, v_pref, v_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(point: (f64, f64), normal: (f64, f64)) -> HalfPlane {
        HalfPlane::new(Vec2::new(point.0, point.1), Vec2::new(normal.0, normal.1))
    }

    #[test]
    fn unconstrained_returns_preference() {
        let v = Vec2::new(0.3, -1.2);
        assert_eq!(solve_velocity(&[], v, 2.0), v);
    }

    #[test]
    fn unconstrained_long_preference_is_clipped() {
        let v = solve_velocity(&[], Vec2::new(3.0, 4.0), 2.0);
        assert!((v - Vec2::new(1.2, 1.6)).length() < 1e-12);
    }

    #[test]
    fn projects_onto_single_boundary() {
        let v = solve_velocity(&[hp((1.0, 0.0), (1.0, 0.0))], Vec2::ZERO, 2.0);
        assert!((v - Vec2::new(1.0, 0.0)).length() < 1e-12, "{v:?}");
    }

    #[test]
    fn corner_of_two_constraints() {
        let planes = [hp((1.0, 0.0), (1.0, 0.0)), hp((0.0, 0.5), (0.0, 1.0))];
        let v = solve_velocity(&planes, Vec2::ZERO, 2.0);
        assert!((v - Vec2::new(1.0, 0.5)).length() < 1e-12, "{v:?}");
    }

    #[test]
    fn infeasible_set_balances_violation() {
        // v_x >= 1 and v_x <= -1 cannot both hold; the least-violation
        // answer sits midway.
        let planes = [hp((1.0, 0.0), (1.0, 0.0)), hp((-1.0, 0.0), (-1.0, 0.0))];
        let v = solve_velocity(&planes, Vec2::new(0.0, 0.0), 2.0);
        assert!(v.x.abs() < 1e-9, "{v:?}");
        assert!(v.length() <= 2.0 + 1e-9);
    }

    #[test]
    fn fixed_constraints_win_when_infeasible() {
        let planes = [hp((1.0, 0.0), (1.0, 0.0)), hp((-1.0, 0.0), (-1.0, 0.0))];
        let v = solve_velocity_with_fixed(&planes, 1, Vec2::ZERO, 2.0);
        assert!(v.x >= 1.0 - 1e-9, "{v:?}");
    }

    #[test]
    fn feasible_preference_is_kept() {
        let planes = [hp((-1.0, 0.0), (1.0, 0.0)), hp((0.0, -1.0), (0.0, 1.0))];
        let v_pref = Vec2::new(0.5, 0.5);
        assert_eq!(solve_velocity(&planes, v_pref, 2.0), v_pref);
    }
}
