use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Subtask, SubtaskKind, TaskError, TaskSpec, MAX_MOVE_TO, MIN_MOVE_TO};
use crate::world::{AgentState, ObjectInstance, RobotConfig, Scene};

/// Minimum geodesic distance between the spawn and the first target.
pub const MIN_SPAWN_DISTANCE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskOptions {
    pub min_move_to: usize,
    pub max_move_to: usize,
}

impl Default for TaskOptions {
    fn default() -> Self {
        Self {
            min_move_to: MIN_MOVE_TO,
            max_move_to: MAX_MOVE_TO,
        }
    }
}

pub fn sample_task(scene: &Scene, robot: &RobotConfig, seed: u64) -> Result<TaskSpec, TaskError> {
    sample_task_with(scene, robot, seed, &TaskOptions::default())
}

/// Samples a task whose Move_to count lies in the requested range.
/// Deterministic in `seed`.
pub fn sample_task_with(
    scene: &Scene,
    robot: &RobotConfig,
    seed: u64,
    opts: &TaskOptions,
) -> Result<TaskSpec, TaskError> {
    let lo = opts.min_move_to.max(MIN_MOVE_TO);
    let hi = opts.max_move_to.min(MAX_MOVE_TO);
    if lo > hi {
        return Err(TaskError::MoveToCount(opts.max_move_to));
    }
    if scene.regions().len() < 2 {
        return Err(TaskError::TooSparse(format!(
            "scene {:?} has {} region(s), need at least 2",
            scene.id(),
            scene.regions().len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wanted = rng.random_range(lo..=hi);
    let mut subtasks = None;
    for k in (lo..=wanted).rev() {
        if let Some(s) = build_subtasks(scene, k, &mut rng) {
            subtasks = Some(s);
            break;
        }
    }
    let subtasks = subtasks.ok_or_else(|| {
        TaskError::TooSparse(format!("scene {:?} cannot host a {lo}-stage task", scene.id()))
    })?;
    let instruction = render_instruction(scene, &subtasks)?;
    let first = &subtasks[0].object;
    let targets: Vec<&str> = subtasks
        .iter()
        .filter(|s| s.kind == SubtaskKind::MoveTo)
        .map(|s| s.object.as_str())
        .collect();
    let start = choose_spawn(scene, robot, first, &targets, seed)?;
    let task = TaskSpec {
        id: format!("{}-t{seed}", scene.id()),
        instruction,
        subtasks,
        robot: robot.name.clone(),
        scene_id: scene.id().to_string(),
        seed,
        start,
    };
    task.validate(scene)?;
    Ok(task)
}

fn pick<'a>(
    rng: &mut ChaCha8Rng,
    pool: &[&'a ObjectInstance],
    exclude: &[&str],
    prefer_other_region: Option<&str>,
) -> Option<&'a ObjectInstance> {
    let allowed: Vec<&ObjectInstance> = pool.iter().copied().filter(|o| !exclude.contains(&o.id.as_str())).collect();
    if let Some(region) = prefer_other_region {
        let other: Vec<&ObjectInstance> = allowed.iter().copied().filter(|o| o.region_id != region).collect();
        if !other.is_empty() {
            return other.choose(rng).copied();
        }
    }
    allowed.choose(rng).copied()
}

fn build_subtasks(scene: &Scene, k: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Subtask>> {
    let all: Vec<&ObjectInstance> = scene.objects().iter().collect();
    let portable: Vec<&ObjectInstance> = all.iter().copied().filter(|o| o.portable).collect();
    let a = pick(rng, &portable, &[], None)?;
    let b = pick(rng, &all, &[&a.id], Some(&a.region_id))?;
    let mut out = vec![
        Subtask::move_to(&a.id, &a.region_id),
        Subtask::grab(&a.id),
        Subtask::move_to(&b.id, &b.region_id),
        Subtask::release(&a.id),
    ];
    match k {
        2 => {}
        3 => {
            let c = pick(rng, &all, &[&a.id, &b.id], Some(&b.region_id))?;
            out.push(Subtask::move_to(&c.id, &c.region_id));
        }
        4 => {
            let c = pick(rng, &portable, &[&a.id, &b.id], Some(&b.region_id))?;
            let d = pick(rng, &all, &[&a.id, &b.id, &c.id], Some(&c.region_id))?;
            out.extend([
                Subtask::move_to(&c.id, &c.region_id),
                Subtask::grab(&c.id),
                Subtask::move_to(&d.id, &d.region_id),
                Subtask::release(&c.id),
            ]);
        }
        _ => return None,
    }
    Some(out)
}

/// Renders the template instruction for a subtask list produced by the
/// sampler: one "take ... to ..." clause per carry and one "find" clause per
/// lone Move_to.
pub fn render_instruction(scene: &Scene, subtasks: &[Subtask]) -> Result<String, TaskError> {
    let describe = |id: &str| -> Result<(String, String), TaskError> {
        let obj = scene.require_object(id)?;
        let label = scene
            .region(&obj.region_id)
            .map(|r| r.label.clone())
            .unwrap_or_else(|| obj.region_id.clone());
        Ok((obj.category.clone(), label))
    };
    let mut clauses = Vec::new();
    let mut i = 0;
    while i < subtasks.len() {
        let s = &subtasks[i];
        let carry = s.kind == SubtaskKind::MoveTo
            && subtasks.get(i + 1).is_some_and(|n| n.kind == SubtaskKind::Grab)
            && subtasks.get(i + 2).is_some_and(|n| n.kind == SubtaskKind::MoveTo)
            && subtasks.get(i + 3).is_some_and(|n| n.kind == SubtaskKind::Release);
        if carry {
            let (cat, region) = describe(&s.object)?;
            let (cat2, region2) = describe(&subtasks[i + 2].object)?;
            clauses.push(format!("take the {cat} in {region} to the {cat2} in {region2}"));
            i += 4;
        } else if s.kind == SubtaskKind::MoveTo {
            let (cat, region) = describe(&s.object)?;
            clauses.push(format!("find the {cat} in {region}"));
            i += 1;
        } else {
            i += 1;
        }
    }
    Ok(clauses.join(", then "))
}

/// Uniformly random free cell at least `MIN_SPAWN_DISTANCE` (geodesic) from
/// `first` and connected to every target, with a heading on the robot's turn
/// lattice. Uses a random stream independent of target selection.
pub fn choose_spawn(
    scene: &Scene,
    robot: &RobotConfig,
    first: &str,
    targets: &[&str],
    seed: u64,
) -> Result<AgentState, TaskError> {
    let mut fields = Vec::with_capacity(targets.len());
    for t in targets {
        let obj = scene.require_object(t)?;
        fields.push(scene.geodesic_field(scene.free_cell_of(&obj.position)?));
    }
    let first_obj = scene.require_object(first)?;
    let first_field = scene.geodesic_field(scene.free_cell_of(&first_obj.position)?);
    let candidates: Vec<_> = scene
        .grid()
        .free_cells()
        .filter(|&c| first_field.distance(c).is_some_and(|d| d >= MIN_SPAWN_DISTANCE))
        .filter(|&c| fields.iter().all(|f| f.distance(c).is_some()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let cell = *candidates.choose(&mut rng).ok_or_else(|| {
        TaskError::TooSparse(format!("no spawn cell {MIN_SPAWN_DISTANCE} m from {first:?}"))
    })?;
    let slots = ((360.0 / robot.turn_step).floor() as u32).max(1);
    let heading = robot.turn_step * rng.random_range(0..slots) as f64;
    Ok(AgentState::new(scene.cell_center(cell), heading))
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::bedroom_office;
    use super::*;
    use crate::expert::geodesic_distance;
    use crate::world::gen::{generate_scene, SceneParams};

    #[test]
    fn fixture_task_matches_example() {
        let scene = bedroom_office();
        let t = sample_task(&scene, &RobotConfig::spot(), 7).unwrap();
        assert_eq!(t.instruction, "take the bag in bedroom to the desk in office");
        let list: Vec<String> = t.subtasks.iter().map(|s| s.to_string()).collect();
        assert_eq!(list, ["Move_to('bag_0')", "Grab('bag_0')", "Move_to('desk_4')", "Release('bag_0')"]);
        assert_eq!(t, sample_task(&scene, &RobotConfig::spot(), 7).unwrap());
    }

    #[test]
    fn spawn_is_far_enough() {
        let scene = bedroom_office();
        for seed in 0..50 {
            let t = sample_task(&scene, &RobotConfig::spot(), seed).unwrap();
            let bag = scene.object("bag_0").unwrap();
            let d = geodesic_distance(&scene, &t.start.position, &bag.position).unwrap().unwrap();
            assert!(d >= MIN_SPAWN_DISTANCE);
            assert_eq!(t.start.heading % 30.0, 0.0);
        }
    }

    #[test]
    fn single_region_scene_is_too_sparse() {
        let scene = generate_scene(&SceneParams {
            regions: 1,
            ..SceneParams::default()
        })
        .unwrap();
        assert!(matches!(sample_task(&scene, &RobotConfig::spot(), 0), Err(TaskError::TooSparse(_))));
    }

    #[test]
    fn generated_tasks_cover_all_lengths() {
        let scene = generate_scene(&SceneParams::default()).unwrap();
        let mut seen = [false; 5];
        for seed in 0..60 {
            let t = sample_task(&scene, &RobotConfig::stretch(), seed).unwrap();
            seen[t.move_to_count()] = true;
        }
        assert!(seen[2] && seen[3] && seen[4]);
    }

    #[test]
    fn fixed_length_option() {
        let scene = generate_scene(&SceneParams::default()).unwrap();
        let opts = TaskOptions {
            min_move_to: 3,
            max_move_to: 3,
        };
        for seed in 0..10 {
            assert_eq!(sample_task_with(&scene, &RobotConfig::spot(), seed, &opts).unwrap().move_to_count(), 3);
        }
    }
}
