use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::grid::{Cell, Grid, Point};
use super::WorldError;
use crate::expert::GeodesicField;

type FieldCache = Arc<RwLock<HashMap<Cell, Arc<GeodesicField>>>>;

pub const DEFAULT_CELL_SIZE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub label: String,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: String,
    pub category: String,
    pub region_id: String,
    pub position: Point,
    pub portable: bool,
}

/// On-disk layout of a scene. Field order here is the canonical order.
#[derive(Serialize, Deserialize)]
struct SceneFile {
    id: String,
    cell_size: f64,
    grid: Vec<String>,
    regions: Vec<Region>,
    objects: Vec<ObjectInstance>,
    seed: u64,
}

/// An immutable, validated scene: occupancy grid plus regions and objects.
#[derive(Debug, Clone)]
pub struct Scene {
    id: String,
    cell_size: f64,
    grid: Grid,
    regions: Vec<Region>,
    objects: Vec<ObjectInstance>,
    seed: u64,
    object_index: HashMap<String, usize>,
    region_index: HashMap<String, usize>,
    cell_region: Vec<Option<usize>>,
    fields: FieldCache,
}

impl PartialEq for Scene {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.cell_size == other.cell_size
            && self.grid == other.grid
            && self.regions == other.regions
            && self.objects == other.objects
            && self.seed == other.seed
    }
}

impl Scene {
    /// Builds a scene and checks every structural invariant.
    pub fn new(
        id: impl Into<String>,
        cell_size: f64,
        grid: Grid,
        regions: Vec<Region>,
        objects: Vec<ObjectInstance>,
        seed: u64,
    ) -> Result<Self, WorldError> {
        let invalid = |msg: String| Err(WorldError::InvalidScene(msg));
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return invalid(format!("cell size {cell_size} must be positive"));
        }
        if grid.is_empty() || !grid.is_bordered() {
            return invalid("grid must be nonempty and bordered by occupied cells".into());
        }

        let mut region_index = HashMap::new();
        let mut cell_region = vec![None; grid.len()];
        for (ri, region) in regions.iter().enumerate() {
            if region_index.insert(region.id.clone(), ri).is_some() {
                return invalid(format!("duplicate region id {:?}", region.id));
            }
            for &cell in &region.cells {
                if grid.is_occupied(cell) {
                    return invalid(format!("region {:?} contains occupied cell {cell:?}", region.id));
                }
                let slot = &mut cell_region[grid.index(cell)];
                if slot.is_some() {
                    return invalid(format!("cell {cell:?} belongs to more than one region"));
                }
                *slot = Some(ri);
            }
        }

        let mut object_index = HashMap::new();
        for (oi, obj) in objects.iter().enumerate() {
            if obj.category.is_empty() {
                return invalid(format!("object {:?} has an empty category", obj.id));
            }
            if object_index.insert(obj.id.clone(), oi).is_some() {
                return invalid(format!("duplicate object id {:?}", obj.id));
            }
            let Some(cell) = cell_of(&grid, cell_size, &obj.position) else {
                return invalid(format!("object {:?} lies outside the grid", obj.id));
            };
            if grid.is_occupied(cell) {
                return invalid(format!("object {:?} lies in an occupied cell", obj.id));
            }
            let Some(&ri) = region_index.get(&obj.region_id) else {
                return invalid(format!("object {:?} references unknown region {:?}", obj.id, obj.region_id));
            };
            if cell_region[grid.index(cell)] != Some(ri) {
                return invalid(format!(
                    "object {:?} is not inside its region {:?}",
                    obj.id, obj.region_id
                ));
            }
        }

        Ok(Self {
            id: id.into(),
            cell_size,
            grid,
            regions,
            objects,
            seed,
            object_index,
            region_index,
            cell_region,
            fields: FieldCache::default(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let file: SceneFile = serde_json::from_str(text)?;
        let grid = Grid::from_rows(&file.grid).map_err(WorldError::InvalidScene)?;
        Self::new(file.id, file.cell_size, grid, file.regions, file.objects, file.seed)
    }

    /// Canonical pretty-printed JSON.
    pub fn to_json(&self) -> String {
        let file = SceneFile {
            id: self.id.clone(),
            cell_size: self.cell_size,
            grid: self.grid.to_rows(),
            regions: self.regions.clone(),
            objects: self.objects.clone(),
            seed: self.seed,
        };
        serde_json::to_string_pretty(&file).expect("scene serialization cannot fail")
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path).map_err(|e| WorldError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), WorldError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| WorldError::io(path, e))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn object(&self, id: &str) -> Option<&ObjectInstance> {
        self.object_index.get(id).map(|&i| &self.objects[i])
    }

    pub fn require_object(&self, id: &str) -> Result<&ObjectInstance, WorldError> {
        self.object(id).ok_or_else(|| WorldError::UnknownObject(id.to_string()))
    }

    pub fn region(&self, id: &str) -> Option<&Region> {
        self.region_index.get(id).map(|&i| &self.regions[i])
    }

    pub fn objects_in_region<'a>(&'a self, region_id: &'a str) -> impl Iterator<Item = &'a ObjectInstance> + 'a {
        self.objects.iter().filter(move |o| o.region_id == region_id)
    }

    /// Cell containing a point, if the point is inside the grid.
    pub fn cell_of(&self, p: &Point) -> Option<Cell> {
        cell_of(&self.grid, self.cell_size, p)
    }

    pub fn cell_center(&self, cell: Cell) -> Point {
        Point::new(
            (cell.col as f64 + 0.5) * self.cell_size,
            (cell.row as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn is_free_point(&self, p: &Point) -> bool {
        self.cell_of(p).is_some_and(|c| self.grid.is_free(c))
    }

    /// Free cell containing `p`, or an error naming the point.
    pub fn free_cell_of(&self, p: &Point) -> Result<Cell, WorldError> {
        match self.cell_of(p) {
            Some(c) if self.grid.is_free(c) => Ok(c),
            _ => Err(WorldError::NotFree { x: p.x, y: p.y }),
        }
    }

    /// Region containing a point, if any.
    pub fn region_at(&self, p: &Point) -> Option<&Region> {
        let cell = self.cell_of(p)?;
        self.cell_region[self.grid.index(cell)].map(|i| &self.regions[i])
    }

    /// Objects grouped by region id, for prompt serialization.
    pub fn objects_by_region(&self) -> BTreeMap<&str, Vec<&ObjectInstance>> {
        let mut map: BTreeMap<&str, Vec<&ObjectInstance>> = BTreeMap::new();
        for o in &self.objects {
            map.entry(o.region_id.as_str()).or_default().push(o);
        }
        map
    }

    /// Shortest-path field rooted at `source`, computed once and cached.
    pub fn geodesic_field(&self, source: Cell) -> Arc<GeodesicField> {
        if let Some(f) = self.fields.read().expect("field cache poisoned").get(&source) {
            return f.clone();
        }
        let field = Arc::new(GeodesicField::compute(self, source));
        self.fields
            .write()
            .expect("field cache poisoned")
            .entry(source)
            .or_insert(field)
            .clone()
    }

    /// Distinct categories, sorted.
    pub fn categories(&self) -> Vec<&str> {
        let set: HashSet<&str> = self.objects.iter().map(|o| o.category.as_str()).collect();
        let mut v: Vec<&str> = set.into_iter().collect();
        v.sort_unstable();
        v
    }
}

fn cell_of(grid: &Grid, cell_size: f64, p: &Point) -> Option<Cell> {
    if !(p.x.is_finite() && p.y.is_finite()) || p.x < 0.0 || p.y < 0.0 {
        return None;
    }
    let cell = Cell::new((p.x / cell_size).floor() as usize, (p.y / cell_size).floor() as usize);
    grid.contains(cell).then_some(cell)
}
