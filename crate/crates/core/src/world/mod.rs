//! Deterministic 2D grid world with continuous agent pose.
//!
//! Scenes are immutable once built and can be shared freely between
//! concurrently running episodes; every operation here is a pure function of
//! its inputs.

pub mod gen;
mod grid;
mod scene;
mod sensing;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grid::{direction_deg, heading_unit, normalize_bearing, normalize_heading, Cell, Grid, Point};
pub use scene::{ObjectInstance, Region, Scene, DEFAULT_CELL_SIZE};
pub use sensing::{
    camera_for_bearing, observe, relative_bearing, segment_clear, Observation, View, ViewDirection,
    VisibleObject,
};

use crate::expert;

/// Radius of the success region around a target, in meters.
pub const SUCCESS_RADIUS: f64 = 1.0;
/// Half-width of the frontal success cone, in degrees.
pub const SUCCESS_HALF_ANGLE: f64 = 30.0;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("unknown object id {0:?}")]
    UnknownObject(String),
    #[error("point ({x}, {y}) is not in a free cell")]
    NotFree { x: f64, y: f64 },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid robot config: {0}")]
    InvalidRobot(String),
    #[error("scene json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl WorldError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        WorldError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Discrete navigation actions. The discriminant is the index used by
/// decision vectors (candidate 0 is stop).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Stop = 0,
    Left = 1,
    Forward = 2,
    Right = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Stop, Action::Left, Action::Forward, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotConfig {
    pub name: String,
    pub camera_height: f64,
    pub forward_step: f64,
    pub turn_step: f64,
    pub fov_per_camera: f64,
    pub sensing_range: f64,
}

impl RobotConfig {
    pub fn spot() -> Self {
        Self {
            name: "spot".into(),
            camera_height: 0.5,
            ..Self::default()
        }
    }

    pub fn stretch() -> Self {
        Self {
            name: "stretch".into(),
            camera_height: 1.3,
            ..Self::default()
        }
    }

    /// Looks up one of the built-in robots by name.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "spot" => Some(Self::spot()),
            "stretch" => Some(Self::stretch()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::InvalidRobot(m.to_string()));
        if !(self.forward_step > 0.0) {
            return bad("forward_step must be positive");
        }
        if !(self.turn_step > 0.0 && self.turn_step <= 90.0) {
            return bad("turn_step must lie in (0, 90]");
        }
        if !(self.fov_per_camera > 0.0 && self.fov_per_camera <= 180.0) {
            return bad("fov_per_camera must lie in (0, 180]");
        }
        if !(self.sensing_range > 0.0) {
            return bad("sensing_range must be positive");
        }
        Ok(())
    }

    /// Plain-text description used when prompting an external generator.
    pub fn describe(&self) -> String {
        format!(
            "{name}: supports move_forward ({step} m), turn_left and turn_right ({turn} degrees). \
             Equipped with three RGB cameras (front, left, right; {fov} degree field of view each) \
             at a height of {h} meters, and a simple robotic arm that can hold one object.",
            name = self.name,
            step = self.forward_step,
            turn = self.turn_step,
            fov = self.fov_per_camera,
            h = self.camera_height,
        )
    }
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            camera_height: 1.0,
            forward_step: 0.25,
            turn_step: 30.0,
            fov_per_camera: 60.0,
            sensing_range: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Point,
    /// Degrees in `[0, 360)`, counter-clockwise from +x.
    pub heading: f64,
    pub holding: Option<String>,
}

impl AgentState {
    pub fn new(position: Point, heading: f64) -> Self {
        Self {
            position,
            heading: normalize_heading(heading),
            holding: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: AgentState,
    pub collided: bool,
    pub stopped: bool,
}

/// Applies one navigation action.
///
/// A forward move is blocked (position and heading unchanged, `collided`
/// set) when the swept segment touches an occupied cell.
pub fn apply_action(scene: &Scene, state: &AgentState, action: Action, robot: &RobotConfig) -> StepOutcome {
    let mut next = state.clone();
    let mut collided = false;
    match action {
        Action::Stop => {
            return StepOutcome {
                state: next,
                collided: false,
                stopped: true,
            }
        }
        Action::Left => next.heading = normalize_heading(state.heading + robot.turn_step),
        Action::Right => next.heading = normalize_heading(state.heading - robot.turn_step),
        Action::Forward => {
            let (ux, uy) = heading_unit(state.heading);
            let dest = Point::new(
                state.position.x + robot.forward_step * ux,
                state.position.y + robot.forward_step * uy,
            );
            if scene.is_free_point(&dest)
                && segment_clear(scene.grid(), scene.cell_size(), &state.position, &dest)
            {
                next.position = dest;
            } else {
                collided = true;
            }
        }
    }
    StepOutcome {
        state: next,
        collided,
        stopped: false,
    }
}

/// True iff the agent is within the success radius (geodesic), the target
/// lies inside the frontal cone, and the line of sight is clear.
pub fn subtask_success(scene: &Scene, state: &AgentState, target: &str) -> Result<bool, WorldError> {
    let obj = scene.require_object(target)?;
    let Some(dist) = expert::geodesic_distance(scene, &state.position, &obj.position)? else {
        return Ok(false);
    };
    if dist > SUCCESS_RADIUS {
        return Ok(false);
    }
    if relative_bearing(state, &obj.position).abs() > SUCCESS_HALF_ANGLE + 1e-9 {
        return Ok(false);
    }
    Ok(segment_clear(scene.grid(), scene.cell_size(), &state.position, &obj.position))
}

/// Bookkeeping manipulation step. Succeeds iff the agent currently satisfies
/// the success predicate for `at_object` and the arm state allows it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interaction {
    Grab,
    Release,
}

/// Grab picks up `object` (arm must be empty); Release drops `object` at the
/// place `at_object` (arm must hold `object`). Returns the new state and
/// whether the interaction succeeded; failures leave the state unchanged.
pub fn interact(
    scene: &Scene,
    state: &AgentState,
    kind: Interaction,
    object: &str,
    at_object: &str,
) -> Result<(AgentState, bool), WorldError> {
    scene.require_object(object)?;
    let in_place = subtask_success(scene, state, at_object)?;
    let mut next = state.clone();
    let ok = match kind {
        Interaction::Grab => in_place && state.holding.is_none(),
        Interaction::Release => in_place && state.holding.as_deref() == Some(object),
    };
    if ok {
        next.holding = match kind {
            Interaction::Grab => Some(object.to_string()),
            Interaction::Release => None,
        };
    }
    Ok((next, ok))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// 12x8 room with a wall stub, one region, a bag and a desk.
    pub fn room() -> Scene {
        let rows = [
            "############",
            "#..........#",
            "#..........#",
            "#..........#",
            "#....#.....#",
            "#....#.....#",
            "#..........#",
            "############",
        ];
        let grid = Grid::from_rows(&rows).unwrap();
        let cells: Vec<Cell> = grid.free_cells().collect();
        let regions = vec![Region {
            id: "0".into(),
            label: "bedroom".into(),
            cells,
        }];
        let objects = vec![
            ObjectInstance {
                id: "bag_0".into(),
                category: "bag".into(),
                region_id: "0".into(),
                position: Point::new(8.5 * 0.25, 1.5 * 0.25),
                portable: true,
            },
            ObjectInstance {
                id: "desk_0".into(),
                category: "desk".into(),
                region_id: "0".into(),
                position: Point::new(7.5 * 0.25, 4.5 * 0.25),
                portable: false,
            },
        ];
        Scene::new("room", 0.25, grid, regions, objects, 1).unwrap()
    }
}
