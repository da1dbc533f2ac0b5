//! Grid geodesics and the greedy expert pathfinder.
//!
//! Geodesic distances are shortest 8-connected paths over free cells
//! (diagonals only when both adjacent axis cells are free). Costs are kept as
//! exact `(axis, diagonal)` step counts so that distances compare exactly and
//! convert to meters identically on every route.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::f64::consts::SQRT_2;
use std::sync::Arc;

use thiserror::Error;

use crate::runner::{SpanOutcome, StepRecord, SubtaskSpan, Trajectory};
use crate::taskforge::SubtaskKind;
use crate::world::{
    apply_action, direction_deg, normalize_bearing, normalize_heading, observe, relative_bearing, segment_clear,
    subtask_success, Action, AgentState, Cell, Point, RobotConfig, Scene, WorldError, SUCCESS_HALF_ANGLE,
    SUCCESS_RADIUS,
};

#[derive(Debug, Error)]
pub enum ExpertError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("target {0:?} is unreachable from the agent")]
    Unreachable(String),
    #[error("step budget of {budget} exhausted before reaching {target:?}")]
    BudgetExhausted { target: String, budget: usize },
}

/// Exact path cost: `axis` straight steps plus `diag` diagonal steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PathCost {
    pub axis: u32,
    pub diag: u32,
}

impl PathCost {
    pub fn meters(self, cell_size: f64) -> f64 {
        cell_size * (self.axis as f64 + self.diag as f64 * SQRT_2)
    }

    fn add_axis(self) -> Self {
        Self {
            axis: self.axis + 1,
            ..self
        }
    }

    fn add_diag(self) -> Self {
        Self {
            diag: self.diag + 1,
            ..self
        }
    }
}

impl Ord for PathCost {
    fn cmp(&self, other: &Self) -> Ordering {
        // a1 + d1*sqrt2 vs a2 + d2*sqrt2  <=>  x vs y*sqrt2 with integers
        let x = self.axis as i64 - other.axis as i64;
        let y = other.diag as i64 - self.diag as i64;
        if x == 0 && y == 0 {
            return Ordering::Equal;
        }
        let lhs = x * x;
        let rhs = 2 * y * y;
        match (x.signum(), y.signum()) {
            (sx, sy) if sx <= 0 && sy >= 0 => Ordering::Less,
            (sx, sy) if sx >= 0 && sy <= 0 => Ordering::Greater,
            // both positive: x < y*sqrt2 <=> x^2 < 2y^2
            (1, 1) => lhs.cmp(&rhs),
            // both negative: x < y*sqrt2 <=> x^2 > 2y^2
            _ => rhs.cmp(&lhs),
        }
    }
}

impl PartialOrd for PathCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest-path field over the free cells of a scene.
#[derive(Debug, Clone)]
pub struct GeodesicField {
    source: Cell,
    width: usize,
    cell_size: f64,
    cost: Vec<Option<PathCost>>,
    predecessor: Vec<Option<Cell>>,
}

impl GeodesicField {
    pub fn compute(scene: &Scene, source: Cell) -> Self {
        let grid = scene.grid();
        let mut cost: Vec<Option<PathCost>> = vec![None; grid.len()];
        let mut predecessor = vec![None; grid.len()];
        let mut done = vec![false; grid.len()];
        let mut heap = BinaryHeap::new();
        if grid.is_free(source) {
            cost[grid.index(source)] = Some(PathCost::default());
            heap.push(Reverse((PathCost::default(), grid.index(source))));
        }
        while let Some(Reverse((c, idx))) = heap.pop() {
            if done[idx] {
                continue;
            }
            done[idx] = true;
            let cell = grid.cell_at(idx);
            let relax = |n: Cell, nc: PathCost, heap: &mut BinaryHeap<_>, cost: &mut Vec<Option<PathCost>>, pred: &mut Vec<Option<Cell>>| {
                let ni = grid.index(n);
                if cost[ni].is_none_or(|old| nc < old) {
                    cost[ni] = Some(nc);
                    pred[ni] = Some(cell);
                    heap.push(Reverse((nc, ni)));
                }
            };
            for n in grid.free_axis_neighbors(cell) {
                relax(n, c.add_axis(), &mut heap, &mut cost, &mut predecessor);
            }
            for n in grid.free_diagonal_neighbors(cell) {
                relax(n, c.add_diag(), &mut heap, &mut cost, &mut predecessor);
            }
        }
        Self {
            source,
            width: grid.width(),
            cell_size: scene.cell_size(),
            cost,
            predecessor,
        }
    }

    pub fn source(&self) -> Cell {
        self.source
    }

    fn idx(&self, cell: Cell) -> Option<usize> {
        let i = cell.row * self.width + cell.col;
        (cell.col < self.width && i < self.cost.len()).then_some(i)
    }

    pub fn cost(&self, cell: Cell) -> Option<PathCost> {
        self.idx(cell).and_then(|i| self.cost[i])
    }

    /// Distance in meters, `None` when unreachable.
    pub fn distance(&self, cell: Cell) -> Option<f64> {
        self.cost(cell).map(|c| c.meters(self.cell_size))
    }

    pub fn predecessor(&self, cell: Cell) -> Option<Cell> {
        self.idx(cell).and_then(|i| self.predecessor[i])
    }

    /// Cells from `cell` back to the source, inclusive.
    pub fn path_to_source(&self, cell: Cell) -> Option<Vec<Cell>> {
        self.cost(cell)?;
        let mut path = vec![cell];
        let mut cur = cell;
        while cur != self.source {
            cur = self.predecessor(cur)?;
            path.push(cur);
        }
        Some(path)
    }
}

/// Geodesic distance in meters between two points, `None` if disconnected.
/// Either point lying in an occupied cell is an error.
pub fn geodesic_distance(scene: &Scene, a: &Point, b: &Point) -> Result<Option<f64>, WorldError> {
    let ca = scene.free_cell_of(a)?;
    let cb = scene.free_cell_of(b)?;
    if ca == cb {
        return Ok(Some(0.0));
    }
    Ok(scene.geodesic_field(cb).distance(ca))
}

/// Per-target plan: success-capable goal cells and 4-connected step counts
/// toward them.
#[derive(Debug)]
struct TargetPlan {
    goal: Vec<bool>,
    steps: Vec<Option<u32>>,
}

/// Greedy pathfinding expert with per-target plan caching.
///
/// From a cell center with an axis-aligned heading lattice (the default
/// robots) the expert never collides: it follows 4-connected cell centers,
/// turning in place whenever the heading error exceeds half a turn step.
pub struct Expert<'a> {
    scene: &'a Scene,
    robot: RobotConfig,
    plans: HashMap<(String, i64), Arc<TargetPlan>>,
}

impl<'a> Expert<'a> {
    pub fn new(scene: &'a Scene, robot: &RobotConfig) -> Self {
        Self {
            scene,
            robot: robot.clone(),
            plans: HashMap::new(),
        }
    }

    /// Distinct headings reachable from `heading` by repeated turns.
    fn heading_lattice(&self, heading: f64) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        let mut h = normalize_heading(heading);
        for _ in 0..720 {
            if out.iter().any(|&o| normalize_bearing(o - h).abs() < 1e-6) {
                break;
            }
            out.push(h);
            h = normalize_heading(h + self.robot.turn_step);
        }
        out
    }

    fn lattice_key(&self, heading: f64) -> i64 {
        (normalize_heading(heading).rem_euclid(self.robot.turn_step) * 1e6).round() as i64
    }

    fn plan(&mut self, target: &str, heading: f64) -> Result<Arc<TargetPlan>, ExpertError> {
        let key = (target.to_string(), self.lattice_key(heading));
        if let Some(p) = self.plans.get(&key) {
            return Ok(p.clone());
        }
        let scene = self.scene;
        let obj = scene.require_object(target)?;
        let grid = scene.grid();
        let target_cell = scene.free_cell_of(&obj.position)?;
        let field = scene.geodesic_field(target_cell);
        let lattice = self.heading_lattice(heading);

        let mut goal = vec![false; grid.len()];
        let mut queue = VecDeque::new();
        let mut steps = vec![None; grid.len()];
        for cell in grid.free_cells() {
            let Some(d) = field.distance(cell) else { continue };
            if d > SUCCESS_RADIUS {
                continue;
            }
            let center = scene.cell_center(cell);
            if !segment_clear(grid, scene.cell_size(), &center, &obj.position) {
                continue;
            }
            let facing_ok = lattice.iter().any(|&h| {
                let probe = AgentState::new(center, h);
                relative_bearing(&probe, &obj.position).abs() <= SUCCESS_HALF_ANGLE + 1e-9
            });
            if facing_ok {
                let i = grid.index(cell);
                goal[i] = true;
                steps[i] = Some(0);
                queue.push_back(cell);
            }
        }
        while let Some(cell) = queue.pop_front() {
            let s = steps[grid.index(cell)].expect("queued cells have a step count");
            for n in grid.free_axis_neighbors(cell) {
                let ni = grid.index(n);
                if steps[ni].is_none() {
                    steps[ni] = Some(s + 1);
                    queue.push_back(n);
                }
            }
        }
        let plan = Arc::new(TargetPlan { goal, steps });
        self.plans.insert(key, plan.clone());
        Ok(plan)
    }

    fn turn_toward(&self, heading: f64, desired: f64) -> Action {
        let err = normalize_bearing(desired - heading);
        if err > 0.0 {
            Action::Left
        } else {
            Action::Right
        }
    }

    /// Next expert action toward `target`.
    pub fn next_action(&mut self, state: &AgentState, target: &str) -> Result<Action, ExpertError> {
        let scene = self.scene;
        if subtask_success(scene, state, target)? {
            return Ok(Action::Stop);
        }
        let plan = self.plan(target, state.heading)?;
        let grid = scene.grid();
        let cell = scene.free_cell_of(&state.position)?;
        let here = grid.index(cell);
        let Some(remaining) = plan.steps[here] else {
            return Err(ExpertError::Unreachable(target.to_string()));
        };
        let center = scene.cell_center(cell);
        let at_center = center.distance(&state.position) < 1e-9;

        if plan.goal[here] && at_center {
            // Turn in place to the reachable heading closest to the target.
            let obj = scene.require_object(target)?;
            let bearing_abs = normalize_heading(state.heading + relative_bearing(state, &obj.position));
            let desired = self
                .heading_lattice(state.heading)
                .into_iter()
                .min_by(|a, b| {
                    let ea = normalize_bearing(bearing_abs - a).abs();
                    let eb = normalize_bearing(bearing_abs - b).abs();
                    ea.total_cmp(&eb)
                })
                .unwrap_or(state.heading);
            if normalize_bearing(desired - state.heading).abs() < 1e-9 {
                // Facing as well as the lattice allows; nothing left to do.
                return Ok(Action::Stop);
            }
            return Ok(self.turn_toward(state.heading, desired));
        }

        let waypoint = if remaining == 0 {
            center
        } else {
            let next = grid
                .free_axis_neighbors(cell)
                .filter(|n| plan.steps[grid.index(*n)].is_some_and(|s| s < remaining))
                .min_by_key(|n| plan.steps[grid.index(*n)])
                .ok_or_else(|| ExpertError::Unreachable(target.to_string()))?;
            if at_center {
                scene.cell_center(next)
            } else {
                center
            }
        };
        let desired = direction_deg(&state.position, &waypoint);
        let err = normalize_bearing(desired - state.heading);
        if err.abs() > self.robot.turn_step / 2.0 + 1e-9 {
            Ok(self.turn_toward(state.heading, desired))
        } else {
            Ok(Action::Forward)
        }
    }
}

/// One-shot expert query without plan reuse.
pub fn expert_next_action(
    scene: &Scene,
    state: &AgentState,
    target: &str,
    robot: &RobotConfig,
) -> Result<Action, ExpertError> {
    Expert::new(scene, robot).next_action(state, target)
}

/// Result of an expert rollout over a list of navigation targets.
#[derive(Debug, Clone)]
pub struct ExpertRollout {
    pub trajectory: Trajectory,
    /// Geodesic distance from each subtask's start pose to its target.
    pub path_lengths: Vec<f64>,
    pub final_state: AgentState,
}

/// Runs the expert through `targets` in order, `budget` steps per target.
pub fn expert_rollout(
    scene: &Scene,
    robot: &RobotConfig,
    start: &AgentState,
    targets: &[String],
    budget: usize,
) -> Result<ExpertRollout, ExpertError> {
    let mut expert = Expert::new(scene, robot);
    let mut state = start.clone();
    let mut steps = Vec::new();
    let mut spans = Vec::new();
    let mut path_lengths = Vec::new();
    for (i, target) in targets.iter().enumerate() {
        let obj = scene.require_object(target)?;
        let gt = geodesic_distance(scene, &state.position, &obj.position)?
            .ok_or_else(|| ExpertError::Unreachable(target.clone()))?;
        path_lengths.push(gt);
        let start_step = steps.len();
        let start_state = state.clone();
        let mut stopped = false;
        for _ in 0..budget {
            let action = expert.next_action(&state, target)?;
            let outcome = apply_action(scene, &state, action, robot);
            steps.push(StepRecord {
                step: steps.len(),
                state: state.clone(),
                action,
                collided: outcome.collided,
                observation_id: observe(scene, &state, robot).digest(),
                subtask: i,
            });
            state = outcome.state;
            if outcome.stopped {
                stopped = true;
                break;
            }
        }
        if !stopped {
            return Err(ExpertError::BudgetExhausted {
                target: target.clone(),
                budget,
            });
        }
        spans.push(SubtaskSpan {
            subtask: i,
            kind: SubtaskKind::MoveTo,
            object: target.clone(),
            start_step,
            end_step: steps.len(),
            start_state,
            gt: Some(gt),
            outcome: SpanOutcome::Stopped,
        });
    }
    Ok(ExpertRollout {
        trajectory: Trajectory {
            task_id: String::from("expert"),
            config_hash: String::new(),
            spans,
            steps,
        },
        path_lengths,
        final_state: state,
    })
}
