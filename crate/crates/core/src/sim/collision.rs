use crate::geometry::{Cell, Rect, Vec2};
use crate::world::Layout;
use std::collections::BTreeSet;

/// Tolerance below `r_i + r_j` before a pair counts as overlapping.
pub const CONTACT_TOLERANCE: f64 = 1e-9;
/// A pair in contact is released once separation exceeds this multiple of
/// the contact distance.
pub const RELEASE_FACTOR: f64 = 1.1;

/// Uniform bucket grid over agent positions, rebuilt every tick.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    cell_size: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<u32>>,
}

impl SpatialGrid {
    pub fn new(width: f64, height: f64, cell_size: f64) -> Self {
        let cell_size = cell_size.max(1.0);
        let cols = ((width / cell_size).ceil() as usize).max(1);
        let rows = ((height / cell_size).ceil() as usize).max(1);
        SpatialGrid { cell_size, cols, rows, buckets: vec![Vec::new(); cols * rows] }
    }

    fn bucket_of(&self, p: Vec2) -> (usize, usize) {
        let bx = (p.x / self.cell_size).floor();
        let by = (p.y / self.cell_size).floor();
        let bx = if bx.is_nan() { 0.0 } else { bx.clamp(0.0, (self.cols - 1) as f64) };
        let by = if by.is_nan() { 0.0 } else { by.clamp(0.0, (self.rows - 1) as f64) };
        (bx as usize, by as usize)
    }

    pub fn rebuild(&mut self, positions: impl Iterator<Item = Vec2>) {
        for b in &mut self.buckets {
            b.clear();
        }
        for (i, p) in positions.enumerate() {
            let (bx, by) = self.bucket_of(p);
            self.buckets[by * self.cols + bx].push(i as u32);
        }
    }

    /// Calls `f` with every indexed agent in buckets overlapping the disk of
    /// `radius` around `p`. Callers filter by exact distance.
    pub fn for_each_near(&self, p: Vec2, radius: f64, mut f: impl FnMut(usize)) {
        let (x0, y0) = self.bucket_of(p - Vec2::new(radius, radius));
        let (x1, y1) = self.bucket_of(p + Vec2::new(radius, radius));
        for by in y0..=y1 {
            for bx in x0..=x1 {
                for &i in &self.buckets[by * self.cols + bx] {
                    f(i as usize);
                }
            }
        }
    }

    /// Up to `max` agents other than `me` within `radius` of `positions[me]`,
    /// nearest first, ties by index.
    pub fn nearest(&self, positions: &[Vec2], me: usize, radius: f64, max: usize) -> Vec<usize> {
        let p = positions[me];
        let mut found: Vec<(f64, usize)> = Vec::new();
        self.for_each_near(p, radius, |j| {
            if j != me {
                let d2 = (positions[j] - p).length_squared();
                if d2 <= radius * radius {
                    found.push((d2, j));
                }
            }
        });
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        found.truncate(max);
        found.into_iter().map(|(_, j)| j).collect()
    }
}

/// Obstacle rectangles of a layout plus four slabs framing the grid, with a
/// lookup of the rectangles near a point.
#[derive(Debug, Clone)]
pub struct ObstacleIndex {
    rects: Vec<Rect>,
    n_layout: usize,
    width: f64,
    height: f64,
}

impl ObstacleIndex {
    pub fn new(layout: &Layout) -> Self {
        let w = layout.width() as f64;
        let h = layout.height() as f64;
        let mut rects = layout.obstacle_rects().to_vec();
        let n_layout = rects.len();
        const T: f64 = 1.0;
        rects.push(Rect::new(Vec2::new(-T, -T), Vec2::new(0.0, h + T)));
        rects.push(Rect::new(Vec2::new(w, -T), Vec2::new(w + T, h + T)));
        rects.push(Rect::new(Vec2::new(0.0, -T), Vec2::new(w, 0.0)));
        rects.push(Rect::new(Vec2::new(0.0, h), Vec2::new(w, h + T)));
        ObstacleIndex { rects, n_layout, width: w, height: h }
    }

    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    /// Indices of rectangles within `range` of `p`, in ascending order.
    pub fn near(&self, layout: &Layout, p: Vec2, range: f64, out: &mut Vec<usize>) {
        out.clear();
        let lo = Cell::containing(p - Vec2::new(range, range));
        let hi = Cell::containing(p + Vec2::new(range, range));
        let x0 = lo.x.max(0);
        let y0 = lo.y.max(0);
        let x1 = hi.x.min(layout.width() as i32 - 1);
        let y1 = hi.y.min(layout.height() as i32 - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if let Some(r) = layout.rect_index_of(Cell::new(x, y)) {
                    out.push(r);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out.retain(|&r| self.rects[r].distance_to(p) <= range);
        let borders = [p.x - range < 0.0, p.x + range > self.width, p.y - range < 0.0, p.y + range > self.height];
        for (k, hit) in borders.into_iter().enumerate() {
            if hit && self.rects[self.n_layout + k].distance_to(p) <= range {
                out.push(self.n_layout + k);
            }
        }
    }

    /// Signed distance from `p` to the nearest rectangle within `range`
    /// (negative when `p` is inside one), or `None` if none is that close.
    pub fn clearance(&self, layout: &Layout, p: Vec2, range: f64, scratch: &mut Vec<usize>) -> Option<f64> {
        self.near(layout, p, range, scratch);
        scratch
            .iter()
            .map(|&r| {
                let rect = &self.rects[r];
                let d = rect.distance_to(p);
                if d > 0.0 {
                    d
                } else {
                    -(p.x - rect.min.x).min(rect.max.x - p.x).min(p.y - rect.min.y).min(rect.max.y - p.y)
                }
            })
            .min_by(f64::total_cmp)
    }
}

/// Rising-edge contact bookkeeping for agent pairs and agent-obstacle overlap.
#[derive(Debug, Clone, Default)]
pub struct ContactTracker {
    pairs: BTreeSet<(u32, u32)>,
    obstacle: Vec<bool>,
}

impl ContactTracker {
    pub fn new(n_agents: usize) -> Self {
        ContactTracker { pairs: BTreeSet::new(), obstacle: vec![false; n_agents] }
    }

    /// Feeds one pair's separation; returns `true` on a new contact.
    pub fn observe_pair(&mut self, a: usize, b: usize, separation: f64, contact: f64) -> bool {
        let key = if a < b { (a as u32, b as u32) } else { (b as u32, a as u32) };
        if separation < contact - CONTACT_TOLERANCE {
            self.pairs.insert(key)
        } else {
            if separation > RELEASE_FACTOR * contact {
                self.pairs.remove(&key);
            }
            false
        }
    }

    /// Releases tracked pairs that have moved apart; `separation` gives
    /// the current distance of a pair.
    pub fn release_pairs(&mut self, contact: f64, separation: impl Fn(usize, usize) -> f64) {
        self.pairs
            .retain(|&(a, b)| separation(a as usize, b as usize) <= RELEASE_FACTOR * contact);
    }

    pub fn in_contact(&self, a: usize, b: usize) -> bool {
        let key = if a < b { (a as u32, b as u32) } else { (b as u32, a as u32) };
        self.pairs.contains(&key)
    }

    /// Feeds one agent's obstacle clearance (`None` = nothing nearby);
    /// returns `true` on a new contact.
    pub fn observe_obstacle(&mut self, agent: usize, clearance: Option<f64>, radius: f64) -> bool {
        let Some(d) = clearance else {
            self.obstacle[agent] = false;
            return false;
        };
        if d < radius - CONTACT_TOLERANCE {
            !std::mem::replace(&mut self.obstacle[agent], true)
        } else {
            if d > RELEASE_FACTOR * radius {
                self.obstacle[agent] = false;
            }
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::load_layout;

    #[test]
    fn separation_above_contact_is_not_a_collision() {
        let mut t = ContactTracker::new(2);
        assert!(!t.observe_pair(0, 1, 3.1, 3.0));
        assert!(!t.in_contact(0, 1));
    }

    #[test]
    fn sustained_overlap_counts_once() {
        let mut t = ContactTracker::new(2);
        let events = (0..10).filter(|_| t.observe_pair(0, 1, 2.5, 3.0)).count();
        assert_eq!(events, 1);
    }

    #[test]
    fn hysteresis_band_holds_contact() {
        let mut t = ContactTracker::new(2);
        assert!(t.observe_pair(1, 0, 2.9, 3.0));
        // Inside the band: still the same contact.
        assert!(!t.observe_pair(0, 1, 3.2, 3.0));
        assert!(!t.observe_pair(0, 1, 2.9, 3.0));
        assert!(!t.observe_pair(0, 1, 3.31, 3.0));
        assert!(t.observe_pair(0, 1, 2.9, 3.0));
    }

    #[test]
    fn release_drops_far_pairs() {
        let mut t = ContactTracker::new(3);
        t.observe_pair(0, 1, 1.0, 3.0);
        t.observe_pair(1, 2, 1.0, 3.0);
        t.release_pairs(3.0, |a, _| if a == 0 { 10.0 } else { 1.0 });
        assert!(!t.in_contact(0, 1));
        assert!(t.in_contact(1, 2));
    }

    #[test]
    fn grid_nearest_orders_by_distance_then_index() {
        let mut g = SpatialGrid::new(20.0, 20.0, 5.0);
        let pos = vec![
            Vec2::new(10.0, 10.0),
            Vec2::new(12.0, 10.0),
            Vec2::new(8.0, 10.0),
            Vec2::new(10.0, 11.0),
            Vec2::new(19.0, 19.0),
        ];
        g.rebuild(pos.iter().copied());
        assert_eq!(g.nearest(&pos, 0, 5.0, 10), vec![3, 1, 2]);
        assert_eq!(g.nearest(&pos, 0, 5.0, 2), vec![3, 1]);
    }

    #[test]
    fn obstacle_index_includes_borders() {
        let l = load_layout("P...\n.#..\n...D\n").unwrap();
        let idx = ObstacleIndex::new(&l);
        let mut near = Vec::new();
        idx.near(&l, Vec2::new(0.5, 0.5), 1.0, &mut near);
        // Inner block at (1,1) plus the left and bottom slabs.
        assert_eq!(near.len(), 3);
        let mut scratch = Vec::new();
        let d = idx.clearance(&l, Vec2::new(1.5, 1.5), 2.0, &mut scratch).unwrap();
        assert_eq!(d, -0.5);
        assert_eq!(idx.clearance(&l, Vec2::new(3.5, 0.5), 0.2, &mut scratch), None);
    }

    #[test]
    fn obstacle_contact_rising_edge() {
        let mut t = ContactTracker::new(1);
        assert!(t.observe_obstacle(0, Some(1.0), 1.5));
        assert!(!t.observe_obstacle(0, Some(0.5), 1.5));
        assert!(!t.observe_obstacle(0, None, 1.5));
        assert!(t.observe_obstacle(0, Some(1.0), 1.5));
    }
}
