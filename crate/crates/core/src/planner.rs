//! Single-agent grid shortest paths.
//!
//! Paths use 8-connectivity with unit orthogonal and `sqrt(2)` diagonal step
//! costs; diagonal steps that would cut an obstacle corner are not allowed.
//! Lengths are reported from step counts (`orth + diag * sqrt(2)`), so equal
//! optimal lengths compare bit-exactly regardless of search order.

use crate::geometry::{Cell, Vec2};
use crate::world::Layout;
use lru::LruCache;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::num::NonZeroUsize;
use std::sync::Arc;

/// How distances between cells are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    /// Euclidean distance between cell centers, obstacles ignored.
    Direct,
    /// Shortest grid path length.
    Astar,
}

#[inline]
pub fn step_length(orth: u32, diag: u32) -> f64 {
    orth as f64 + diag as f64 * std::f64::consts::SQRT_2
}

/// Octile distance: exact shortest length on an obstacle-free grid.
#[inline]
pub fn octile(a: Cell, b: Cell) -> f64 {
    let dx = (a.x - b.x).unsigned_abs();
    let dy = (a.y - b.y).unsigned_abs();
    step_length(dx.max(dy) - dx.min(dy), dx.min(dy))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub waypoints: Vec<Vec2>,
    pub length: f64,
}

impl Path {
    /// Straight segment between two points (direct navigation).
    pub fn straight(from: Vec2, to: Vec2) -> Path {
        Path { waypoints: vec![from, to], length: from.distance(to) }
    }

    fn from_cells(cells: &[Cell]) -> Path {
        let (mut orth, mut diag) = (0, 0);
        for w in cells.windows(2) {
            if w[0].x != w[1].x && w[0].y != w[1].y {
                diag += 1;
            } else {
                orth += 1;
            }
        }
        Path { waypoints: cells.iter().map(|c| c.center()).collect(), length: step_length(orth, diag) }
    }

    pub fn goal(&self) -> Vec2 {
        *self.waypoints.last().expect("paths are never empty")
    }

    /// Length of the path from waypoint `index` to the end.
    pub fn length_from(&self, index: usize) -> f64 {
        self.waypoints[index.min(self.waypoints.len() - 1)..]
            .windows(2)
            .map(|w| w[0].distance(w[1]))
            .sum()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct OpenNode {
    f: f64,
    g: f64,
    cell: Cell,
}

impl Eq for OpenNode {}

impl Ord for OpenNode {
    // BinaryHeap pops the greatest element: lower f, then higher g, then the
    // lexicographically smaller cell must compare greater.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(self.g.total_cmp(&other.g))
            .then(other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const UNSEEN: (u32, u32) = (u32::MAX, u32::MAX);

/// A* search from `start` to `goal`. Returns `None` when the goal cannot be
/// reached (or either endpoint is blocked).
pub fn astar(layout: &Layout, start: Cell, goal: Cell) -> Option<Path> {
    if !layout.is_free(start) || !layout.is_free(goal) {
        return None;
    }
    if start == goal {
        return Some(Path { waypoints: vec![start.center()], length: 0.0 });
    }
    let n = layout.width() * layout.height();
    let mut counts = vec![UNSEEN; n];
    let mut parent = vec![u32::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();

    counts[layout.index(start)] = (0, 0);
    open.push(OpenNode { f: octile(start, goal), g: 0.0, cell: start });
    while let Some(OpenNode { g, cell, .. }) = open.pop() {
        let ci = layout.index(cell);
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        if cell == goal {
            let mut cells = vec![goal];
            let mut at = ci;
            while parent[at] != u32::MAX {
                at = parent[at] as usize;
                cells.push(layout.cell_at(at));
            }
            cells.reverse();
            return Some(Path::from_cells(&cells));
        }
        let (orth, diag) = counts[ci];
        for (next, is_diag) in layout.neighbors(cell) {
            let ni = layout.index(next);
            if closed[ni] {
                continue;
            }
            let cand = if is_diag { (orth, diag + 1) } else { (orth + 1, diag) };
            let cand_g = step_length(cand.0, cand.1);
            let known = counts[ni];
            if known == UNSEEN || cand_g < step_length(known.0, known.1) {
                counts[ni] = cand;
                parent[ni] = ci as u32;
                open.push(OpenNode { f: cand_g + octile(next, goal), g: cand_g, cell: next });
            }
        }
        debug_assert!(g.is_finite());
    }
    None
}

/// Shortest-path lengths from one source cell to every cell of a layout.
#[derive(Debug, Clone)]
pub struct DistanceField {
    source: Cell,
    width: usize,
    dist: Vec<f64>,
}

impl DistanceField {
    pub fn compute(layout: &Layout, source: Cell) -> DistanceField {
        let n = layout.width() * layout.height();
        let mut counts = vec![UNSEEN; n];
        let mut dist = vec![f64::INFINITY; n];
        if !layout.is_free(source) {
            return DistanceField { source, width: layout.width(), dist };
        }
        let mut open = BinaryHeap::new();
        counts[layout.index(source)] = (0, 0);
        open.push(OpenNode { f: 0.0, g: 0.0, cell: source });
        while let Some(OpenNode { g, cell, .. }) = open.pop() {
            let ci = layout.index(cell);
            if dist[ci].is_finite() {
                continue;
            }
            dist[ci] = g;
            let (orth, diag) = counts[ci];
            for (next, is_diag) in layout.neighbors(cell) {
                let ni = layout.index(next);
                if dist[ni].is_finite() {
                    continue;
                }
                let cand = if is_diag { (orth, diag + 1) } else { (orth + 1, diag) };
                let cand_g = step_length(cand.0, cand.1);
                let known = counts[ni];
                if known == UNSEEN || cand_g < step_length(known.0, known.1) {
                    counts[ni] = cand;
                    open.push(OpenNode { f: cand_g, g: cand_g, cell: next });
                }
            }
        }
        DistanceField { source, width: layout.width(), dist }
    }

    pub fn source(&self) -> Cell {
        self.source
    }

    /// Distance to `c`; infinite when unreachable or out of bounds.
    pub fn get(&self, c: Cell) -> f64 {
        let height = self.dist.len() / self.width;
        if c.x < 0 || c.y < 0 || c.x as usize >= self.width || c.y as usize >= height {
            return f64::INFINITY;
        }
        self.dist[c.y as usize * self.width + c.x as usize]
    }
}

/// Distance between two cells; `f64::INFINITY` when unreachable.
pub fn nav_distance(layout: &Layout, a: Cell, b: Cell, mode: DistanceMode) -> f64 {
    match mode {
        DistanceMode::Direct => a.center().distance(b.center()),
        DistanceMode::Astar => astar(layout, a, b).map_or(f64::INFINITY, |p| p.length),
    }
}

/// Nearest free cell to `c` by center distance (ties: lexicographic order).
pub fn nearest_free(layout: &Layout, c: Cell) -> Option<Cell> {
    if layout.is_free(c) {
        return Some(c);
    }
    let max_r = layout.width().max(layout.height()) as i32;
    for r in 1..=max_r {
        let mut best: Option<(f64, Cell)> = None;
        for dy in -r..=r {
            for dx in -r..=r {
                if dx.abs() != r && dy.abs() != r {
                    continue;
                }
                let n = Cell::new(c.x + dx, c.y + dy);
                if layout.is_free(n) {
                    let d = (dx * dx + dy * dy) as f64;
                    if best.is_none_or(|(bd, bc)| d < bd || (d == bd && n < bc)) {
                        best = Some((d, n));
                    }
                }
            }
        }
        if let Some((_, n)) = best {
            return Some(n);
        }
    }
    None
}

/// Advances a path cursor: starting at `cursor`, steps forward over
/// consecutive waypoints while the next one lies within `lookahead` of
/// `position`. The returned index never decreases.
pub fn advance_cursor(path: &Path, cursor: usize, position: Vec2, lookahead: f64) -> usize {
    let last = path.waypoints.len() - 1;
    // The first waypoint is where the path starts; aim at least one past it.
    let mut i = cursor.max(1).min(last);
    while i < last && path.waypoints[i + 1].distance(position) <= lookahead {
        i += 1;
    }
    // Sitting on an intermediate waypoint gives no direction; aim past it.
    if i < last && path.waypoints[i].distance(position) < 1e-9 {
        i += 1;
    }
    i
}

/// Stateful waypoint tracker for one agent's traversal of a path.
#[derive(Debug, Clone)]
pub struct PathFollower {
    path: Arc<Path>,
    cursor: usize,
}

impl PathFollower {
    pub fn new(path: Arc<Path>) -> Self {
        assert!(!path.waypoints.is_empty(), "empty path");
        PathFollower { path, cursor: 0 }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn goal(&self) -> Vec2 {
        self.path.goal()
    }

    /// The farthest consecutive waypoint within `lookahead` of `position`,
    /// or the final waypoint once every remaining one is within range.
    pub fn next_waypoint(&mut self, position: Vec2, lookahead: f64) -> Vec2 {
        self.cursor = advance_cursor(&self.path, self.cursor, position, lookahead);
        self.path.waypoints[self.cursor]
    }

    /// Estimated remaining travel: to the current target waypoint, then along the path.
    pub fn remaining_length(&self, position: Vec2) -> f64 {
        position.distance(self.path.waypoints[self.cursor]) + self.path.length_from(self.cursor)
    }
}

/// Bounded LRU cache of paths between cells of one layout.
pub struct PathCache {
    paths: LruCache<(Cell, Cell), Option<Arc<Path>>>,
    fields: LruCache<Cell, Arc<DistanceField>>,
}

impl PathCache {
    pub fn new(path_capacity: usize, field_capacity: usize) -> Self {
        PathCache {
            paths: LruCache::new(NonZeroUsize::new(path_capacity.max(1)).expect("nonzero")),
            fields: LruCache::new(NonZeroUsize::new(field_capacity.max(1)).expect("nonzero")),
        }
    }

    pub fn path(&mut self, layout: &Layout, start: Cell, goal: Cell) -> Option<Arc<Path>> {
        self.paths
            .get_or_insert((start, goal), || astar(layout, start, goal).map(Arc::new))
            .clone()
    }

    pub fn field(&mut self, layout: &Layout, source: Cell) -> Arc<DistanceField> {
        self.fields
            .get_or_insert(source, || Arc::new(DistanceField::compute(layout, source)))
            .clone()
    }
}

impl Default for PathCache {
    fn default() -> Self {
        PathCache::new(4096, 256)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::load_layout;

    fn open(n: usize) -> Layout {
        let mut s = String::new();
        for y in 0..n {
            for x in 0..n {
                s.push(if x == 0 && y == 0 { 'P' } else if x + 1 == n && y + 1 == n { 'D' } else { '.' });
            }
            s.push('\n');
        }
        load_layout(&s).unwrap()
    }

    #[test]
    fn diagonal_on_empty_grid() {
        let l = open(3);
        let p = astar(&l, Cell::new(0, 0), Cell::new(2, 2)).unwrap();
        assert_eq!(p.length, 2.0 * std::f64::consts::SQRT_2);
        assert_eq!(p.waypoints.len(), 3);
    }

    #[test]
    fn start_equals_goal() {
        let l = open(3);
        let p = astar(&l, Cell::new(1, 1), Cell::new(1, 1)).unwrap();
        assert_eq!(p.waypoints, vec![Cell::new(1, 1).center()]);
        assert_eq!(p.length, 0.0);
    }

    #[test]
    fn direct_distance_is_euclidean() {
        let l = open(6);
        assert_eq!(nav_distance(&l, Cell::new(0, 0), Cell::new(3, 4), DistanceMode::Direct), 5.0);
    }

    #[test]
    fn empty_grid_matches_octile() {
        let l = open(12);
        for (a, b) in [((0, 0), (11, 5)), ((3, 9), (7, 1)), ((11, 11), (0, 4))] {
            let (a, b) = (Cell::new(a.0, a.1), Cell::new(b.0, b.1));
            assert_eq!(nav_distance(&l, a, b, DistanceMode::Astar), octile(a, b));
        }
    }

    #[test]
    fn corner_cutting_forbidden() {
        let l = load_layout("P#\n.D\n").unwrap();
        let p = astar(&l, Cell::new(0, 0), Cell::new(1, 1)).unwrap();
        assert_eq!(p.length, 2.0);
    }

    #[test]
    fn unreachable_goal_is_none() {
        let l = load_layout("P.#.\n..#.\n..#.\nD...\n").unwrap();
        assert!(astar(&l, Cell::new(0, 0), Cell::new(3, 0)).is_some());
        let walled = load_layout("P.#.\n..#.\nD.#.\n").unwrap();
        assert!(astar(&walled, Cell::new(0, 0), Cell::new(3, 0)).is_none());
        assert_eq!(nav_distance(&walled, Cell::new(0, 0), Cell::new(3, 0), DistanceMode::Astar), f64::INFINITY);
    }

    #[test]
    fn field_agrees_with_astar() {
        let l = load_layout("P....#....\n.###.#.##.\n...#...#..\n.#.####.#.\n.#......#D\n").unwrap();
        let src = Cell::new(0, 0);
        let field = DistanceField::compute(&l, src);
        for c in l.free_cells() {
            let a = astar(&l, src, c).map_or(f64::INFINITY, |p| p.length);
            assert_eq!(field.get(c), a, "{c:?}");
        }
    }

    #[test]
    fn cursor_example_straight_path() {
        let cells: Vec<Cell> = (0..5).map(|x| Cell::new(x, 0)).collect();
        let path = Arc::new(Path::from_cells(&cells));
        let mut f = PathFollower::new(path.clone());
        assert_eq!(f.next_waypoint(path.waypoints[1], 1.0), path.waypoints[2]);
        assert_eq!(f.next_waypoint(path.goal(), 1.0), path.goal());
    }

    #[test]
    fn cursor_is_monotone_when_agent_falls_back() {
        let cells: Vec<Cell> = (0..6).map(|x| Cell::new(x, 0)).collect();
        let path = Arc::new(Path::from_cells(&cells));
        let mut f = PathFollower::new(path.clone());
        f.next_waypoint(path.waypoints[3], 1.5);
        let at = f.cursor();
        f.next_waypoint(path.waypoints[0], 1.5);
        assert!(f.cursor() >= at);
    }

    #[test]
    fn nearest_free_prefers_closest() {
        let l = load_layout("P..\n.#.\n..D\n").unwrap();
        assert_eq!(nearest_free(&l, Cell::new(1, 1)), Some(Cell::new(0, 1)));
        assert_eq!(nearest_free(&l, Cell::new(2, 2)), Some(Cell::new(2, 2)));
    }

    #[test]
    fn cache_returns_same_path() {
        let l = open(8);
        let mut cache = PathCache::new(2, 2);
        let a = cache.path(&l, Cell::new(0, 0), Cell::new(7, 3)).unwrap();
        let b = cache.path(&l, Cell::new(0, 0), Cell::new(7, 3)).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let f = cache.field(&l, Cell::new(0, 0));
        assert_eq!(f.get(Cell::new(7, 3)), a.length);
    }
}
