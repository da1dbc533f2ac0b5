//! Line-of-sight traversal and the three-camera observation model.

use serde::{Deserialize, Serialize};

use super::grid::{direction_deg, normalize_bearing, Cell, Grid, Point};
use super::{AgentState, RobotConfig, Scene};

const TIE_EPS: f64 = 1e-9;

/// Camera slots in index order. Lower index wins boundary ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewDirection {
    Left,
    Front,
    Right,
}

impl ViewDirection {
    pub const ALL: [ViewDirection; 3] = [ViewDirection::Left, ViewDirection::Front, ViewDirection::Right];

    /// Camera axis relative to the agent heading, in degrees (positive is left).
    pub fn axis_deg(self) -> f64 {
        match self {
            ViewDirection::Left => 60.0,
            ViewDirection::Front => 0.0,
            ViewDirection::Right => -60.0,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            ViewDirection::Left => "left",
            ViewDirection::Front => "front",
            ViewDirection::Right => "right",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleObject {
    pub id: String,
    pub category: String,
    /// Relative to the agent heading, degrees in (-180, 180].
    pub bearing: f64,
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub direction: ViewDirection,
    pub objects: Vec<VisibleObject>,
}

/// Exactly three views: left (+60°), front (0°), right (-60°).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub views: [View; 3],
}

impl Observation {
    pub fn view(&self, dir: ViewDirection) -> &View {
        &self.views[dir as usize]
    }

    pub fn visible(&self) -> impl Iterator<Item = &VisibleObject> {
        self.views.iter().flat_map(|v| v.objects.iter())
    }

    pub fn is_empty(&self) -> bool {
        self.views.iter().all(|v| v.objects.is_empty())
    }

    pub fn contains(&self, object_id: &str) -> bool {
        self.visible().any(|o| o.id == object_id)
    }

    /// Short stable digest of the observation, used as a snapshot id.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("observation serialization cannot fail");
        let hash = Sha256::digest(&json);
        hash[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Returns true when the segment `a -> b` touches no occupied cell.
/// Crossing exactly through a grid vertex checks both side cells.
pub fn segment_clear(grid: &Grid, cell_size: f64, a: &Point, b: &Point) -> bool {
    let (x0, y0) = (a.x / cell_size, a.y / cell_size);
    let (x1, y1) = (b.x / cell_size, b.y / cell_size);
    if x0 < 0.0 || y0 < 0.0 || x1 < 0.0 || y1 < 0.0 {
        return false;
    }
    let mut cx = x0.floor() as isize;
    let mut cy = y0.floor() as isize;
    let ex = x1.floor() as isize;
    let ey = y1.floor() as isize;
    let occupied = |c: isize, r: isize| c < 0 || r < 0 || grid.is_occupied(Cell::new(c as usize, r as usize));
    if occupied(cx, cy) {
        return false;
    }

    let dx = x1 - x0;
    let dy = y1 - y0;
    let sx: isize = if dx > 0.0 { 1 } else { -1 };
    let sy: isize = if dy > 0.0 { 1 } else { -1 };
    let t_delta_x = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };
    let mut t_max_x = if dx > 0.0 {
        (cx as f64 + 1.0 - x0) / dx
    } else if dx < 0.0 {
        (x0 - cx as f64) / -dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy > 0.0 {
        (cy as f64 + 1.0 - y0) / dy
    } else if dy < 0.0 {
        (y0 - cy as f64) / -dy
    } else {
        f64::INFINITY
    };

    let max_iters = (ex - cx).unsigned_abs() + (ey - cy).unsigned_abs() + 2;
    for _ in 0..max_iters {
        if cx == ex && cy == ey {
            return true;
        }
        if t_max_x.min(t_max_y) > 1.0 + 1e-12 {
            return true;
        }
        if (t_max_x - t_max_y).abs() <= 1e-12 {
            if occupied(cx + sx, cy) || occupied(cx, cy + sy) {
                return false;
            }
            cx += sx;
            cy += sy;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        } else if t_max_x < t_max_y {
            cx += sx;
            t_max_x += t_delta_x;
        } else {
            cy += sy;
            t_max_y += t_delta_y;
        }
        if occupied(cx, cy) {
            return false;
        }
    }
    true
}

/// Camera that sees an object at `bearing`, if any: nearest axis within
/// half the field of view, ties to the lower camera index.
pub fn camera_for_bearing(bearing: f64, fov_per_camera: f64) -> Option<ViewDirection> {
    let half = fov_per_camera / 2.0;
    let mut best: Option<(ViewDirection, f64)> = None;
    for dir in ViewDirection::ALL {
        let off = normalize_bearing(bearing - dir.axis_deg()).abs();
        if off > half + TIE_EPS {
            continue;
        }
        match best {
            Some((_, b)) if off >= b - TIE_EPS => {}
            _ => best = Some((dir, off)),
        }
    }
    best.map(|(d, _)| d)
}

/// Bearing of `target` relative to the agent heading, in (-180, 180].
/// A target coincident with the agent has bearing 0.
pub fn relative_bearing(state: &AgentState, target: &Point) -> f64 {
    if state.position == *target {
        return 0.0;
    }
    normalize_bearing(direction_deg(&state.position, target) - state.heading)
}

pub fn observe(scene: &Scene, state: &AgentState, robot: &RobotConfig) -> Observation {
    let mut views = ViewDirection::ALL.map(|direction| View {
        direction,
        objects: Vec::new(),
    });
    for obj in scene.objects() {
        let range = state.position.distance(&obj.position);
        if range > robot.sensing_range {
            continue;
        }
        let bearing = relative_bearing(state, &obj.position);
        let Some(dir) = camera_for_bearing(bearing, robot.fov_per_camera) else {
            continue;
        };
        if !segment_clear(scene.grid(), scene.cell_size(), &state.position, &obj.position) {
            continue;
        }
        views[dir as usize].objects.push(VisibleObject {
            id: obj.id.clone(),
            category: obj.category.clone(),
            bearing,
            range,
        });
    }
    Observation { views }
}
