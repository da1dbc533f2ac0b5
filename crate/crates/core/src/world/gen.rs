//! Procedural synthetic scenes: a grid of rooms joined by doorways, with
//! furniture blocks and labelled object instances.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Cell, Grid, ObjectInstance, Region, Scene, WorldError, DEFAULT_CELL_SIZE};

/// (category, portable) pools per room label. No category is a substring of
/// another, so instructions can be searched unambiguously.
pub const ROOM_CATALOG: &[(&str, &[(&str, bool)])] = &[
    (
        "bedroom",
        &[("bed", false), ("nightstand", false), ("lamp", true), ("pillow", true), ("bag", true), ("wardrobe", false), ("rug", false)],
    ),
    (
        "office",
        &[("desk", false), ("chair", false), ("printer", false), ("folder", true), ("stapler", true), ("keyboard", true), ("computer", false)],
    ),
    (
        "kitchen",
        &[("fridge", false), ("stove", false), ("cup", true), ("kettle", true), ("plate", true), ("sink", false), ("toaster", true)],
    ),
    (
        "bathroom",
        &[("toilet", false), ("bathtub", false), ("towel", true), ("soap", true), ("mirror", false), ("toothbrush", true)],
    ),
    (
        "living room",
        &[("sofa", false), ("television", false), ("remote", true), ("cushion", true), ("vase", true), ("coffee table", false), ("plant", true)],
    ),
    (
        "dining room",
        &[("dining table", false), ("candle", true), ("bowl", true), ("napkin", true), ("sideboard", false), ("teapot", true)],
    ),
    (
        "study",
        &[("globe", true), ("easel", false), ("typewriter", true), ("cabinet", false), ("clock", true)],
    ),
    (
        "garage",
        &[("bicycle", false), ("drill", true), ("helmet", true), ("ladder", false), ("tire", false)],
    ),
    (
        "laundry room",
        &[("washer", false), ("dryer", false), ("basket", true), ("detergent", true), ("hanger", true)],
    ),
    (
        "hallway",
        &[("coat rack", false), ("umbrella", true), ("shoe", true), ("bench", false), ("painting", false)],
    ),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub seed: u64,
    /// Side length of the square grid, in cells.
    pub size: usize,
    pub regions: usize,
    pub objects_per_region: usize,
    pub cell_size: f64,
    pub door_width: usize,
    pub furniture_per_region: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            seed: 0,
            size: 40,
            regions: 4,
            objects_per_region: 5,
            cell_size: DEFAULT_CELL_SIZE,
            door_width: 3,
            furniture_per_region: 2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Room {
    c0: usize,
    c1: usize,
    r0: usize,
    r1: usize,
}

/// Splits `[lo, hi)` into `n` nearly equal spans separated by one wall cell.
fn spans(lo: usize, hi: usize, n: usize) -> Vec<(usize, usize)> {
    let total = hi - lo;
    let mut out = Vec::with_capacity(n);
    let mut start = lo;
    for i in 0..n {
        let end = lo + (total + 1) * (i + 1) / n - 1;
        let end = end.min(hi);
        out.push((start, end));
        start = end + 1;
    }
    out
}

pub fn generate_scene(params: &SceneParams) -> Result<Scene, WorldError> {
    let invalid = |m: String| WorldError::InvalidScene(m);
    if params.regions == 0 || params.regions > ROOM_CATALOG.len() {
        return Err(invalid(format!("region count must be in 1..={}", ROOM_CATALOG.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let size = params.size;
    let cols = (params.regions as f64).sqrt().ceil() as usize;
    let rows = params.regions.div_ceil(cols);
    let min_room = params.door_width + 2;

    // Lay out rooms row by row; the last row may hold fewer, wider rooms.
    let row_spans = spans(1, size.saturating_sub(1), rows);
    let mut rooms: Vec<Vec<Room>> = Vec::new();
    let mut remaining = params.regions;
    for &(r0, r1) in &row_spans {
        let n = remaining.min(cols);
        remaining -= n;
        let row: Vec<Room> = spans(1, size.saturating_sub(1), n)
            .into_iter()
            .map(|(c0, c1)| Room { c0, c1, r0, r1 })
            .collect();
        rooms.push(row);
    }
    if rooms.iter().flatten().any(|r| r.c1 - r.c0 < min_room || r.r1 - r.r0 < min_room) {
        return Err(invalid(format!(
            "grid size {size} is too small for {} regions",
            params.regions
        )));
    }

    let mut grid = Grid::new_free(size, size);
    for r in 0..size {
        for c in 0..size {
            grid.set_occupied(Cell::new(c, r), true);
        }
    }
    for room in rooms.iter().flatten() {
        for r in room.r0..room.r1 {
            for c in room.c0..room.c1 {
                grid.set_occupied(Cell::new(c, r), false);
            }
        }
    }

    // Doorways between horizontal neighbours (wall column at c1).
    let dw = params.door_width;
    for row in &rooms {
        for pair in row.windows(2) {
            let a = pair[0];
            let start = rng.random_range(a.r0 + 1..=a.r1 - dw - 1);
            for r in start..start + dw {
                grid.set_occupied(Cell::new(a.c1, r), false);
            }
        }
    }
    // Doorways between rows (wall row at r1 of the upper row) for each
    // sufficiently overlapping pair; at least one per boundary.
    for w in rooms.windows(2) {
        let mut opened = false;
        let mut best: Option<(usize, usize, usize)> = None;
        for up in &w[0] {
            for down in &w[1] {
                let lo = up.c0.max(down.c0);
                let hi = up.c1.min(down.c1);
                if hi <= lo {
                    continue;
                }
                let overlap = hi - lo;
                if best.is_none_or(|b| overlap > b.1 - b.0) {
                    best = Some((lo, hi, up.r1));
                }
                if overlap >= dw + 2 {
                    let start = rng.random_range(lo + 1..=hi - dw - 1);
                    for c in start..start + dw {
                        grid.set_occupied(Cell::new(c, up.r1), false);
                    }
                    opened = true;
                }
            }
        }
        if !opened {
            let (lo, hi, wall) = best.ok_or_else(|| invalid("rooms do not overlap".into()))?;
            for c in lo..hi.min(lo + dw) {
                grid.set_occupied(Cell::new(c, wall), false);
            }
        }
    }

    let flat: Vec<Room> = rooms.into_iter().flatten().collect();

    // Furniture: small blocks kept one cell away from walls; rejected if
    // they disconnect free space.
    for room in &flat {
        for _ in 0..params.furniture_per_region {
            let w = rng.random_range(1..=3usize);
            let h = rng.random_range(1..=2usize);
            if room.c1 - room.c0 < w + 4 || room.r1 - room.r0 < h + 4 {
                continue;
            }
            let c = rng.random_range(room.c0 + 2..=room.c1 - w - 2);
            let r = rng.random_range(room.r0 + 2..=room.r1 - h - 2);
            let block: Vec<Cell> = (r..r + h)
                .flat_map(|rr| (c..c + w).map(move |cc| Cell::new(cc, rr)))
                .collect();
            for &cell in &block {
                grid.set_occupied(cell, true);
            }
            if grid.free_components() != 1 {
                for &cell in &block {
                    grid.set_occupied(cell, false);
                }
            }
        }
    }

    let mut labels: Vec<usize> = (0..ROOM_CATALOG.len()).collect();
    labels.shuffle(&mut rng);

    let mut regions = Vec::with_capacity(flat.len());
    let mut objects = Vec::new();
    for (ri, room) in flat.iter().enumerate() {
        let (label, pool) = ROOM_CATALOG[labels[ri]];
        let cells: Vec<Cell> = (room.r0..room.r1)
            .flat_map(|r| (room.c0..room.c1).map(move |c| Cell::new(c, r)))
            .filter(|&c| grid.is_free(c))
            .collect();
        let region_id = ri.to_string();

        let count = params.objects_per_region.min(pool.len());
        let mut chosen: Vec<&(&str, bool)> = pool.choose_multiple(&mut rng, count).collect();
        // keep at least one portable object per room so tasks can be built
        if !chosen.iter().any(|(_, p)| *p) {
            if let Some(portable) = pool.iter().find(|(_, p)| *p) {
                chosen.pop();
                chosen.push(portable);
            }
        }
        let mut free_spots = cells.clone();
        free_spots.shuffle(&mut rng);
        for (&(category, portable), cell) in chosen.into_iter().zip(free_spots) {
            objects.push(ObjectInstance {
                id: format!("{category}_{region_id}"),
                category: category.to_string(),
                region_id: region_id.clone(),
                position: super::Point::new(
                    (cell.col as f64 + 0.5) * params.cell_size,
                    (cell.row as f64 + 0.5) * params.cell_size,
                ),
                portable,
            });
        }
        regions.push(Region {
            id: region_id,
            label: label.to_string(),
            cells,
        });
    }

    Scene::new(
        format!("scene_{}", params.seed),
        params.cell_size,
        grid,
        regions,
        objects,
        params.seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_scenes_are_connected_and_valid() {
        for seed in 0..20 {
            for regions in [2, 3, 4, 6] {
                let scene = generate_scene(&SceneParams {
                    seed,
                    regions,
                    ..SceneParams::default()
                })
                .unwrap();
                assert_eq!(scene.grid().free_components(), 1, "seed {seed} regions {regions}");
                assert_eq!(scene.regions().len(), regions);
                for region in scene.regions() {
                    assert!(scene.objects_in_region(&region.id).any(|o| o.portable));
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let p = SceneParams {
            seed: 42,
            ..SceneParams::default()
        };
        assert_eq!(generate_scene(&p).unwrap().to_json(), generate_scene(&p).unwrap().to_json());
    }

    #[test]
    fn catalog_categories_are_not_substrings() {
        let mut all: Vec<&str> = ROOM_CATALOG.iter().flat_map(|(_, p)| p.iter().map(|(c, _)| *c)).collect();
        all.sort_unstable();
        for a in &all {
            assert!(!a.contains('_'));
            for b in &all {
                if a != b {
                    assert!(!b.contains(a), "{a} is a substring of {b}");
                }
            }
        }
    }

    #[test]
    fn too_small_grid_is_rejected() {
        let p = SceneParams {
            size: 8,
            regions: 4,
            ..SceneParams::default()
        };
        assert!(generate_scene(&p).is_err());
    }
}
