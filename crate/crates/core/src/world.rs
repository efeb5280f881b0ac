//! Static warehouse layouts and the lifelong task stream.
//!
//! A [`Layout`] is an occupancy grid of unit cells plus two sampling regions:
//! pickup cells (task origins) and delivery cells (task destinations). Cell
//! `(x, y)` covers `[x, x + 1] x [y, y + 1]` in continuous space; row `y` of a
//! layout file is the `y`-th grid line after the optional header.

mod generate;

pub use generate::{generate_layout, LayoutPreset, ShelfSpec};

use crate::geometry::{Cell, Rect, Vec2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("line {line}, column {column}: unexpected character {ch:?}")]
    BadCharacter { line: usize, column: usize, ch: char },
    #[error("line {line}: row has {found} cells, expected {expected}")]
    RaggedRow { line: usize, found: usize, expected: usize },
    #[error("line {line}: malformed header {text:?}")]
    BadHeader { line: usize, text: String },
    #[error("layout must be at least 2x2, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
    #[error("region cell ({x}, {y}) lies on an obstacle", x = .0.x, y = .0.y)]
    RegionOnObstacle(Cell),
    #[error("region cell ({x}, {y}) is not reachable from ({fx}, {fy})", x = .cell.x, y = .cell.y, fx = .from.x, fy = .from.y)]
    Disconnected { from: Cell, cell: Cell },
    #[error("infeasible shelf specification: {0}")]
    Infeasible(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum TaskError {
    #[error("layout has an empty {0} region")]
    EmptyRegion(&'static str),
    #[error("pickup and delivery regions only offer coincident cells")]
    NoDistinctPair,
}

/// Offsets of the 8-connected neighbourhood, orthogonal moves first.
pub const NEIGHBOR_OFFSETS: [(i32, i32); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

#[derive(Debug, Clone)]
pub struct Layout {
    name: String,
    width: usize,
    height: usize,
    blocked: Vec<bool>,
    pickup: Vec<Cell>,
    delivery: Vec<Cell>,
    obstacle_rects: Vec<Rect>,
    rect_of_cell: Vec<u32>,
}

const NO_RECT: u32 = u32::MAX;

impl Layout {
    /// Builds and validates a layout from raw parts.
    pub fn from_parts(
        name: impl Into<String>,
        width: usize,
        height: usize,
        blocked: Vec<bool>,
        pickup: Vec<Cell>,
        delivery: Vec<Cell>,
    ) -> Result<Layout, LayoutError> {
        let layout = Layout::unchecked(name.into(), width, height, blocked, pickup, delivery)?;
        layout.validate()?;
        Ok(layout)
    }

    fn unchecked(
        name: String,
        width: usize,
        height: usize,
        blocked: Vec<bool>,
        mut pickup: Vec<Cell>,
        mut delivery: Vec<Cell>,
    ) -> Result<Layout, LayoutError> {
        if width < 2 || height < 2 {
            return Err(LayoutError::TooSmall { width, height });
        }
        assert_eq!(blocked.len(), width * height, "occupancy size mismatch");
        pickup.sort();
        pickup.dedup();
        delivery.sort();
        delivery.dedup();
        let (obstacle_rects, rect_of_cell) = decompose_rects(width, height, &blocked);
        Ok(Layout { name, width, height, blocked, pickup, delivery, obstacle_rects, rect_of_cell })
    }

    fn validate(&self) -> Result<(), LayoutError> {
        for &c in self.pickup.iter().chain(&self.delivery) {
            if !self.is_free(c) {
                return Err(LayoutError::RegionOnObstacle(c));
            }
        }
        let Some(&root) = self.pickup.first().or(self.delivery.first()) else {
            return Ok(());
        };
        let reach = self.reachable_from(root);
        for &c in self.pickup.iter().chain(&self.delivery) {
            if !reach[self.index(c)] {
                return Err(LayoutError::Disconnected { from: root, cell: c });
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Length of the layout diagonal; the feature normalisation scale.
    pub fn diagonal(&self) -> f64 {
        ((self.width * self.width + self.height * self.height) as f64).sqrt()
    }

    pub fn pickup_region(&self) -> &[Cell] {
        &self.pickup
    }

    pub fn delivery_region(&self) -> &[Cell] {
        &self.delivery
    }

    pub fn obstacle_rects(&self) -> &[Rect] {
        &self.obstacle_rects
    }

    #[inline]
    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    #[inline]
    pub fn index(&self, c: Cell) -> usize {
        c.y as usize * self.width + c.x as usize
    }

    #[inline]
    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new((index % self.width) as i32, (index / self.width) as i32)
    }

    #[inline]
    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.blocked[self.index(c)]
    }

    pub fn free_cell_count(&self) -> usize {
        self.blocked.iter().filter(|b| !**b).count()
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.blocked.len()).filter(|&i| !self.blocked[i]).map(|i| self.cell_at(i))
    }

    /// Index of the obstacle rectangle covering `c`, if `c` is blocked.
    pub fn rect_index_of(&self, c: Cell) -> Option<usize> {
        if !self.in_bounds(c) {
            return None;
        }
        match self.rect_of_cell[self.index(c)] {
            NO_RECT => None,
            r => Some(r as usize),
        }
    }

    /// Free neighbours of `c` with their step costs. Diagonal steps require
    /// both orthogonally adjacent cells to be free (no corner cutting).
    pub fn neighbors(&self, c: Cell) -> impl Iterator<Item = (Cell, bool)> + '_ {
        NEIGHBOR_OFFSETS.iter().filter_map(move |&(dx, dy)| {
            let n = Cell::new(c.x + dx, c.y + dy);
            if !self.is_free(n) {
                return None;
            }
            let diagonal = dx != 0 && dy != 0;
            if diagonal
                && (!self.is_free(Cell::new(c.x + dx, c.y)) || !self.is_free(Cell::new(c.x, c.y + dy)))
            {
                return None;
            }
            Some((n, diagonal))
        })
    }

    /// BFS reachability over the free-cell graph.
    pub fn reachable_from(&self, start: Cell) -> Vec<bool> {
        let mut seen = vec![false; self.blocked.len()];
        if !self.is_free(start) {
            return seen;
        }
        let mut queue = VecDeque::new();
        seen[self.index(start)] = true;
        queue.push_back(start);
        while let Some(c) = queue.pop_front() {
            for (n, _) in self.neighbors(c) {
                let i = self.index(n);
                if !seen[i] {
                    seen[i] = true;
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// Distance from the center of `c` to the nearest obstacle cell or to
    /// the outer boundary of the grid.
    pub fn clearance(&self, c: Cell) -> f64 {
        self.clearance_capped(c, f64::INFINITY)
    }

    /// Like [`Layout::clearance`], but stops searching once the answer is
    /// known to be at least `cap`; the result is then some value `>= cap`.
    pub fn clearance_capped(&self, c: Cell, cap: f64) -> f64 {
        let p = c.center();
        let mut best = p
            .x
            .min(self.width as f64 - p.x)
            .min(p.y)
            .min(self.height as f64 - p.y);
        let reach = best.min(cap).ceil() as i32 + 1;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let n = Cell::new(c.x + dx, c.y + dy);
                if self.in_bounds(n) && self.blocked[self.index(n)] {
                    let r = Rect::new(
                        Vec2::new(n.x as f64, n.y as f64),
                        Vec2::new(n.x as f64 + 1.0, n.y as f64 + 1.0),
                    );
                    best = best.min(r.distance_to(p));
                }
            }
        }
        best
    }

    /// Copy of this layout in which every cell whose center lies closer than
    /// `clearance` to an obstacle (or the grid boundary) is blocked. Used as a
    /// configuration-space grid for disk-shaped agents. Regions are kept as-is
    /// and not validated.
    pub fn inflated(&self, clearance: f64) -> Layout {
        let blocked = (0..self.blocked.len())
            .map(|i| self.blocked[i] || self.clearance_capped(self.cell_at(i), clearance) < clearance - 1e-9)
            .collect();
        let mut out = Layout::unchecked(
            format!("{}+inflated", self.name),
            self.width,
            self.height,
            blocked,
            Vec::new(),
            Vec::new(),
        )
        .expect("dimensions already validated");
        out.pickup = self.pickup.clone();
        out.delivery = self.delivery.clone();
        out
    }

    /// Serialises the layout in the ASCII layout-file format.
    pub fn to_text(&self) -> String {
        let mut kinds = vec![b'.'; self.blocked.len()];
        for (i, b) in self.blocked.iter().enumerate() {
            if *b {
                kinds[i] = b'#';
            }
        }
        for c in &self.pickup {
            kinds[self.index(*c)] = b'P';
        }
        for c in &self.delivery {
            kinds[self.index(*c)] = b'D';
        }
        let mut out = format!("layout {}\n", self.name);
        for row in kinds.chunks(self.width) {
            out.push_str(std::str::from_utf8(row).expect("ascii"));
            out.push('\n');
        }
        out
    }
}

/// Greedy decomposition of obstacle cells into maximal axis-aligned rectangles.
fn decompose_rects(width: usize, height: usize, blocked: &[bool]) -> (Vec<Rect>, Vec<u32>) {
    let mut rect_of = vec![NO_RECT; blocked.len()];
    let mut rects = Vec::new();
    for y in 0..height {
        let mut x = 0;
        while x < width {
            let i = y * width + x;
            if !blocked[i] || rect_of[i] != NO_RECT {
                x += 1;
                continue;
            }
            let mut x_end = x + 1;
            while x_end < width && blocked[y * width + x_end] && rect_of[y * width + x_end] == NO_RECT {
                x_end += 1;
            }
            let mut y_end = y + 1;
            'grow: while y_end < height {
                for xx in x..x_end {
                    let j = y_end * width + xx;
                    if !blocked[j] || rect_of[j] != NO_RECT {
                        break 'grow;
                    }
                }
                y_end += 1;
            }
            let id = rects.len() as u32;
            for yy in y..y_end {
                for xx in x..x_end {
                    rect_of[yy * width + xx] = id;
                }
            }
            rects.push(Rect::new(
                Vec2::new(x as f64, y as f64),
                Vec2::new(x_end as f64, y_end as f64),
            ));
            x = x_end;
        }
    }
    (rects, rect_of)
}

/// Parses the ASCII layout format: `.` free, `#` obstacle, `P` pickup,
/// `D` delivery, one row per line, optional first line `layout <name>`.
pub fn load_layout(text: &str) -> Result<Layout, LayoutError> {
    let mut lines = text.split('\n').enumerate().peekable();
    let mut name = String::from("unnamed");
    if let Some((_, first)) = lines.peek() {
        if first.starts_with("layout") {
            let (line_no, header) = lines.next().expect("peeked");
            match header.strip_prefix("layout ") {
                Some(n) if !n.is_empty() && !n.ends_with(char::is_whitespace) => name = n.to_string(),
                _ => {
                    return Err(LayoutError::BadHeader { line: line_no + 1, text: header.to_string() })
                }
            }
        }
    }

    let mut width = None;
    let mut blocked = Vec::new();
    let mut pickup = Vec::new();
    let mut delivery = Vec::new();
    let mut height = 0usize;
    let mut rows: Vec<(usize, &str)> = lines.collect();
    // A single trailing newline leaves one empty final segment.
    if matches!(rows.last(), Some((_, ""))) {
        rows.pop();
    }
    for (line_no, row) in rows {
        let line = line_no + 1;
        let mut count = 0usize;
        for (col, ch) in row.chars().enumerate() {
            let cell = Cell::new(col as i32, height as i32);
            match ch {
                '.' => blocked.push(false),
                '#' => blocked.push(true),
                'P' => {
                    blocked.push(false);
                    pickup.push(cell);
                }
                'D' => {
                    blocked.push(false);
                    delivery.push(cell);
                }
                _ => return Err(LayoutError::BadCharacter { line, column: col + 1, ch }),
            }
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(LayoutError::RaggedRow { line, found: count, expected: w })
            }
            _ => {}
        }
        height += 1;
    }
    let width = width.unwrap_or(0);
    Layout::from_parts(name, width, height, blocked, pickup, delivery)
}

/// One pickup-and-delivery job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: u64,
    pub origin: Cell,
    pub destination: Cell,
    pub created_at: f64,
}

/// Draws a task with origin uniform over the pickup region and destination
/// uniform over the delivery region, redrawing until they differ.
pub fn sample_task<R: Rng + ?Sized>(
    layout: &Layout,
    rng: &mut R,
    id: u64,
    created_at: f64,
) -> Result<Task, TaskError> {
    let pickup = layout.pickup_region();
    let delivery = layout.delivery_region();
    if pickup.is_empty() {
        return Err(TaskError::EmptyRegion("pickup"));
    }
    if delivery.is_empty() {
        return Err(TaskError::EmptyRegion("delivery"));
    }
    if pickup.len() == 1 && delivery.len() == 1 && pickup[0] == delivery[0] {
        return Err(TaskError::NoDistinctPair);
    }
    loop {
        let origin = pickup[rng.random_range(0..pickup.len())];
        let destination = delivery[rng.random_range(0..delivery.len())];
        if origin != destination {
            return Ok(Task { id, origin, destination, created_at });
        }
    }
}

/// Fixed-length queue of pending tasks, replenished on every removal.
#[derive(Debug, Clone)]
pub struct TaskQueue {
    tasks: Vec<Task>,
    capacity: usize,
    next_id: u64,
}

impl TaskQueue {
    pub fn new(capacity: usize) -> Self {
        TaskQueue { tasks: Vec::with_capacity(capacity), capacity, next_id: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Total number of tasks ever sampled into the queue.
    pub fn issued(&self) -> u64 {
        self.next_id
    }

    /// Tops the queue up to capacity with freshly sampled tasks.
    pub fn fill<R: Rng + ?Sized>(&mut self, layout: &Layout, rng: &mut R, now: f64) -> Result<(), TaskError> {
        while self.tasks.len() < self.capacity {
            let task = sample_task(layout, rng, self.next_id, now)?;
            self.next_id += 1;
            self.tasks.push(task);
        }
        Ok(())
    }

    /// Removes the task at `index` and appends a fresh sample in its place at
    /// the back of the queue.
    pub fn take<R: Rng + ?Sized>(
        &mut self,
        index: usize,
        layout: &Layout,
        rng: &mut R,
        now: f64,
    ) -> Result<Task, TaskError> {
        let task = self.tasks.remove(index);
        self.fill(layout, rng, now)?;
        Ok(task)
    }
}
