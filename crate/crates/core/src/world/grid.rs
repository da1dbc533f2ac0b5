//! Occupancy grid and continuous/discrete coordinate helpers.

use serde::{Deserialize, Serialize};

/// A point in the world plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Grid cell index. `col` runs along +x, `row` along +y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

impl From<[usize; 2]> for Cell {
    fn from(v: [usize; 2]) -> Self {
        Cell::new(v[0], v[1])
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.col, c.row]
    }
}

/// Axis-aligned 4-neighbourhood offsets, in a fixed order (+x, +y, -x, -y).
pub const AXIS_OFFSETS: [(isize, isize); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// Diagonal offsets.
pub const DIAGONAL_OFFSETS: [(isize, isize); 4] = [(1, 1), (-1, 1), (-1, -1), (1, -1)];

/// Boolean occupancy grid. `true` means occupied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    width: usize,
    height: usize,
    occupied: Vec<bool>,
}

impl Grid {
    /// Builds a grid of the given size with every cell free.
    pub fn new_free(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            occupied: vec![false; width * height],
        }
    }

    /// Parses rows of `#` (occupied) and `.` (free).
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self, String> {
        let height = rows.len();
        if height == 0 {
            return Err("grid has no rows".into());
        }
        let width = rows[0].as_ref().chars().count();
        if width == 0 {
            return Err("grid has empty rows".into());
        }
        let mut occupied = Vec::with_capacity(width * height);
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != width {
                return Err(format!("grid row {r} has length {} (expected {width})", row.chars().count()));
            }
            for ch in row.chars() {
                match ch {
                    '#' => occupied.push(true),
                    '.' => occupied.push(false),
                    other => return Err(format!("grid row {r} contains invalid character {other:?}")),
                }
            }
        }
        Ok(Self {
            width,
            height,
            occupied,
        })
    }

    pub fn to_rows(&self) -> Vec<String> {
        (0..self.height)
            .map(|r| {
                (0..self.width)
                    .map(|c| if self.occupied[r * self.width + c] { '#' } else { '.' })
                    .collect()
            })
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.col < self.width && cell.row < self.height
    }

    /// Out-of-range cells count as occupied.
    pub fn is_occupied(&self, cell: Cell) -> bool {
        !self.contains(cell) || self.occupied[self.index(cell)]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        !self.is_occupied(cell)
    }

    pub fn set_occupied(&mut self, cell: Cell, occupied: bool) {
        let idx = self.index(cell);
        self.occupied[idx] = occupied;
    }

    pub fn offset(&self, cell: Cell, dc: isize, dr: isize) -> Option<Cell> {
        let col = cell.col.checked_add_signed(dc)?;
        let row = cell.row.checked_add_signed(dr)?;
        let next = Cell::new(col, row);
        self.contains(next).then_some(next)
    }

    /// Free 4-neighbours in [`AXIS_OFFSETS`] order.
    pub fn free_axis_neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        AXIS_OFFSETS
            .iter()
            .filter_map(move |&(dc, dr)| self.offset(cell, dc, dr))
            .filter(|c| self.is_free(*c))
    }

    /// Free diagonal neighbours reachable without cutting an occupied corner.
    pub fn free_diagonal_neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        DIAGONAL_OFFSETS.iter().filter_map(move |&(dc, dr)| {
            let diag = self.offset(cell, dc, dr)?;
            let side_a = self.offset(cell, dc, 0)?;
            let side_b = self.offset(cell, 0, dr)?;
            (self.is_free(diag) && self.is_free(side_a) && self.is_free(side_b)).then_some(diag)
        })
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).filter(|&i| !self.occupied[i]).map(|i| self.cell_at(i))
    }

    /// True when every cell on the outer ring is occupied.
    pub fn is_bordered(&self) -> bool {
        let w = self.width;
        let h = self.height;
        (0..w).all(|c| self.is_occupied(Cell::new(c, 0)) && self.is_occupied(Cell::new(c, h - 1)))
            && (0..h).all(|r| self.is_occupied(Cell::new(0, r)) && self.is_occupied(Cell::new(w - 1, r)))
    }

    /// Number of 4-connected components of free space.
    pub fn free_components(&self) -> usize {
        let mut seen = vec![false; self.len()];
        let mut components = 0;
        let mut stack = Vec::new();
        for start in self.free_cells() {
            if seen[self.index(start)] {
                continue;
            }
            components += 1;
            seen[self.index(start)] = true;
            stack.push(start);
            while let Some(c) = stack.pop() {
                for n in self.free_axis_neighbors(c) {
                    let i = self.index(n);
                    if !seen[i] {
                        seen[i] = true;
                        stack.push(n);
                    }
                }
            }
        }
        components
    }
}

/// Normalizes an angle in degrees to `[0, 360)`.
pub fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360.0 for tiny negative inputs.
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Normalizes an angle difference in degrees to `(-180, 180]`.
pub fn normalize_bearing(deg: f64) -> f64 {
    let mut b = deg.rem_euclid(360.0);
    if b > 180.0 {
        b -= 360.0;
    }
    b
}

/// Unit vector for a heading in degrees. Multiples of 90° are exact so that
/// axis-aligned motion never accumulates rounding drift.
pub fn heading_unit(deg: f64) -> (f64, f64) {
    let h = normalize_heading(deg);
    if h == 0.0 {
        (1.0, 0.0)
    } else if h == 90.0 {
        (0.0, 1.0)
    } else if h == 180.0 {
        (-1.0, 0.0)
    } else if h == 270.0 {
        (0.0, -1.0)
    } else {
        let r = h.to_radians();
        (r.cos(), r.sin())
    }
}

/// Absolute direction from `from` to `to` in degrees, `[0, 360)`.
/// Coincident points have direction 0.
pub fn direction_deg(from: &Point, to: &Point) -> f64 {
    let dx = to.x - from.x;
    let dy = to.y - from.y;
    if dx == 0.0 && dy == 0.0 {
        return 0.0;
    }
    if dy == 0.0 {
        return if dx > 0.0 { 0.0 } else { 180.0 };
    }
    if dx == 0.0 {
        return if dy > 0.0 { 90.0 } else { 270.0 };
    }
    normalize_heading(dy.atan2(dx).to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let rows = ["#####", "#..##", "#####"];
        let grid = Grid::from_rows(&rows).unwrap();
        assert_eq!(grid.to_rows(), rows);
        assert!(grid.is_free(Cell::new(1, 1)));
        assert!(grid.is_occupied(Cell::new(3, 1)));
        assert!(grid.is_occupied(Cell::new(9, 9)));
        assert!(grid.is_bordered());
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(Grid::from_rows(&["###", "##"]).is_err());
        assert!(Grid::from_rows(&["#x#"]).is_err());
        assert!(Grid::from_rows::<&str>(&[]).is_err());
    }

    #[test]
    fn diagonal_requires_both_sides_free() {
        let grid = Grid::from_rows(&["#####", "#..##", "#.#.#", "#####"]).unwrap();
        let diags: Vec<_> = grid.free_diagonal_neighbors(Cell::new(1, 1)).collect();
        assert!(diags.is_empty());
        let grid = Grid::from_rows(&["#####", "#...#", "#...#", "#####"]).unwrap();
        let diags: Vec<_> = grid.free_diagonal_neighbors(Cell::new(1, 1)).collect();
        assert_eq!(diags, vec![Cell::new(2, 2)]);
    }

    #[test]
    fn angle_normalization() {
        assert_eq!(normalize_heading(-30.0), 330.0);
        assert_eq!(normalize_heading(360.0), 0.0);
        assert_eq!(normalize_bearing(190.0), -170.0);
        assert_eq!(normalize_bearing(-180.0), 180.0);
        assert_eq!(direction_deg(&Point::new(0.0, 0.0), &Point::new(0.0, 2.0)), 90.0);
        assert_eq!(heading_unit(270.0), (0.0, -1.0));
    }

    #[test]
    fn components_counted() {
        let grid = Grid::from_rows(&["#####", "#.#.#", "#####"]).unwrap();
        assert_eq!(grid.free_components(), 2);
    }
}
