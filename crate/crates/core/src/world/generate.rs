use super::{Layout, LayoutError};
use crate::geometry::{Cell, Rect, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Compactness parameters for a shelf-block warehouse.
///
/// Shelves are `shelf_width x shelf_depth` blocks laid out on a lattice with
/// `aisle_x`/`aisle_y` free cells between neighbouring blocks, inside a free
/// border of `margin` cells. A band of `station_band` rows above the bottom
/// margin holds the delivery stations. Pickup cells are aisle cells within
/// `pickup_reach` of a shelf. Region cells must have at least
/// `region_clearance` distance to any obstacle so disk agents can stand on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShelfSpec {
    pub shelf_width: usize,
    pub shelf_depth: usize,
    pub aisle_x: usize,
    pub aisle_y: usize,
    pub margin: usize,
    pub station_band: usize,
    pub region_clearance: f64,
    pub pickup_reach: f64,
    /// Probability of leaving out each shelf block.
    pub drop_fraction: f64,
}

impl ShelfSpec {
    /// No shelves at all: pickups fill the upper area, deliveries the bottom band.
    pub fn open(margin: usize, station_band: usize, region_clearance: f64) -> Self {
        ShelfSpec {
            shelf_width: 0,
            shelf_depth: 0,
            aisle_x: 0,
            aisle_y: 0,
            margin,
            station_band,
            region_clearance,
            pickup_reach: f64::INFINITY,
            drop_fraction: 0.0,
        }
    }

    pub fn has_shelves(&self) -> bool {
        self.shelf_width > 0 && self.shelf_depth > 0
    }
}

/// Warehouse analogues of varying compactness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayoutPreset {
    /// Narrow vertical racks, wide aisles.
    A,
    /// Deep double racks.
    B,
    /// Square blocks on a tight lattice.
    C,
    /// Horizontal racks.
    D,
    /// Long racks with wide cross aisles.
    E,
    /// 20x20-scale warehouse for quick training.
    Small,
    /// Obstacle-free floor.
    Open,
}

impl LayoutPreset {
    pub const WAREHOUSES: [LayoutPreset; 5] =
        [LayoutPreset::A, LayoutPreset::B, LayoutPreset::C, LayoutPreset::D, LayoutPreset::E];

    pub fn spec(self) -> ShelfSpec {
        let base = |shelf_width, shelf_depth, aisle_x, aisle_y| ShelfSpec {
            shelf_width,
            shelf_depth,
            aisle_x,
            aisle_y,
            margin: 3,
            station_band: 4,
            region_clearance: 1.5,
            pickup_reach: 2.0,
            drop_fraction: 0.0,
        };
        match self {
            LayoutPreset::A => base(2, 8, 6, 6),
            LayoutPreset::B => base(4, 8, 6, 5),
            LayoutPreset::C => base(4, 4, 5, 5),
            LayoutPreset::D => base(8, 2, 6, 5),
            LayoutPreset::E => base(2, 14, 5, 8),
            LayoutPreset::Small => ShelfSpec {
                shelf_width: 2,
                shelf_depth: 4,
                aisle_x: 3,
                aisle_y: 3,
                margin: 2,
                station_band: 2,
                region_clearance: 1.5,
                pickup_reach: 2.0,
                drop_fraction: 0.0,
            },
            LayoutPreset::Open => ShelfSpec::open(2, 4, 1.5),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LayoutPreset::A => "A",
            LayoutPreset::B => "B",
            LayoutPreset::C => "C",
            LayoutPreset::D => "D",
            LayoutPreset::E => "E",
            LayoutPreset::Small => "small",
            LayoutPreset::Open => "open",
        }
    }

    pub fn parse(s: &str) -> Option<LayoutPreset> {
        Some(match s.to_ascii_lowercase().as_str() {
            "a" => LayoutPreset::A,
            "b" => LayoutPreset::B,
            "c" => LayoutPreset::C,
            "d" => LayoutPreset::D,
            "e" => LayoutPreset::E,
            "small" => LayoutPreset::Small,
            "open" => LayoutPreset::Open,
            _ => return None,
        })
    }

    pub fn generate(self, width: usize, height: usize, seed: u64) -> Result<Layout, LayoutError> {
        let mut layout = generate_layout(width, height, &self.spec(), seed)?;
        layout.set_name(format!("{}-{}x{}", self.name(), width, height));
        Ok(layout)
    }
}

pub fn generate_layout(
    width: usize,
    height: usize,
    spec: &ShelfSpec,
    seed: u64,
) -> Result<Layout, LayoutError> {
    let infeasible = |msg: String| Err(LayoutError::Infeasible(msg));
    if width < 2 || height < 2 {
        return Err(LayoutError::TooSmall { width, height });
    }
    if 2 * spec.margin >= width || 2 * spec.margin + spec.station_band >= height {
        return infeasible(format!("margins do not fit a {width}x{height} grid"));
    }
    if spec.has_shelves() && (spec.aisle_x == 0 || spec.aisle_y == 0) {
        return infeasible("shelf rows need at least one free aisle between them".into());
    }

    let x_end = width - spec.margin;
    let band_start = height - spec.margin - spec.station_band;
    let zone_y_end = band_start.saturating_sub(spec.aisle_y);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocked = vec![false; width * height];
    let mut shelves = Vec::new();
    if spec.has_shelves() {
        let mut y0 = spec.margin;
        while y0 + spec.shelf_depth <= zone_y_end {
            let mut x0 = spec.margin;
            while x0 + spec.shelf_width <= x_end {
                if spec.drop_fraction <= 0.0 || rng.random::<f64>() >= spec.drop_fraction {
                    for y in y0..y0 + spec.shelf_depth {
                        for x in x0..x0 + spec.shelf_width {
                            blocked[y * width + x] = true;
                        }
                    }
                    shelves.push(Rect::new(
                        Vec2::new(x0 as f64, y0 as f64),
                        Vec2::new((x0 + spec.shelf_width) as f64, (y0 + spec.shelf_depth) as f64),
                    ));
                }
                x0 += spec.shelf_width + spec.aisle_x;
            }
            y0 += spec.shelf_depth + spec.aisle_y;
        }
        if shelves.is_empty() {
            return infeasible("no shelf block fits inside the margins".into());
        }
    }

    let mut layout = Layout::unchecked(
        format!("gen-{width}x{height}-s{seed}"),
        width,
        height,
        blocked,
        Vec::new(),
        Vec::new(),
    )?;

    let mut pickup = Vec::new();
    let mut delivery = Vec::new();
    for y in spec.margin..height - spec.margin {
        for x in spec.margin..x_end {
            let c = Cell::new(x as i32, y as i32);
            if !layout.is_free(c) || layout.clearance_capped(c, spec.region_clearance) < spec.region_clearance - 1e-9 {
                continue;
            }
            if y >= band_start {
                delivery.push(c);
            } else if y < zone_y_end.max(spec.margin + 1) {
                let near_shelf = shelves.is_empty()
                    || shelves.iter().any(|r| r.distance_to(c.center()) <= spec.pickup_reach);
                if near_shelf {
                    pickup.push(c);
                }
            }
        }
    }
    if pickup.is_empty() {
        return infeasible("pickup region is empty".into());
    }
    if delivery.is_empty() {
        return infeasible("delivery region is empty".into());
    }
    layout.pickup = pickup;
    layout.delivery = delivery;
    layout.validate()?;

    if spec.region_clearance > 0.0 {
        let inflated = layout.inflated(spec.region_clearance);
        let reach = inflated.reachable_from(layout.pickup[0]);
        if let Some(c) = layout
            .pickup
            .iter()
            .chain(&layout.delivery)
            .find(|c| !reach[layout.index(**c)])
        {
            return infeasible(format!(
                "region cell ({}, {}) unreachable for agents with clearance {}",
                c.x, c.y, spec.region_clearance
            ));
        }
    }
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::load_layout;

    #[test]
    fn open_layout_has_no_obstacles() {
        let l = generate_layout(60, 60, &ShelfSpec::open(2, 4, 1.5), 1).unwrap();
        assert_eq!(l.free_cell_count(), 3600);
        assert!(l.obstacle_rects().is_empty());
        assert!(!l.pickup_region().is_empty() && !l.delivery_region().is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let mut spec = LayoutPreset::B.spec();
        spec.drop_fraction = 0.3;
        let a = generate_layout(60, 60, &spec, 7).unwrap();
        let b = generate_layout(60, 60, &spec, 7).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let c = generate_layout(60, 60, &spec, 8).unwrap();
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn all_presets_generate_and_reload() {
        for p in LayoutPreset::WAREHOUSES {
            let l = p.generate(60, 60, 0).unwrap();
            assert!(l.free_cell_count() < 3600, "{p:?} has no shelves");
            let again = load_layout(&l.to_text()).unwrap();
            assert_eq!(again.to_text(), l.to_text());
        }
        LayoutPreset::Small.generate(20, 20, 0).unwrap();
    }

    #[test]
    fn zero_aisle_is_infeasible() {
        let mut spec = LayoutPreset::A.spec();
        spec.aisle_x = 0;
        assert!(matches!(generate_layout(60, 60, &spec, 0), Err(LayoutError::Infeasible(_))));
    }

    #[test]
    fn oversized_margins_are_infeasible() {
        let spec = ShelfSpec::open(10, 4, 0.0);
        assert!(matches!(generate_layout(20, 20, &spec, 0), Err(LayoutError::Infeasible(_))));
    }

    #[test]
    fn region_cells_respect_clearance() {
        let l = LayoutPreset::C.generate(60, 60, 0).unwrap();
        for c in l.pickup_region().iter().chain(l.delivery_region()) {
            assert!(l.clearance(*c) >= 1.5 - 1e-9);
        }
    }
}
