use super::{run_suite, RunConfig, RunError, Trajectory};
use crate::memory::{DecisionVector, LongTermStore, ShortTermMemory, StoreEntry};
use crate::policy::{features, BackendInput, EmbeddingOracle, ExpertPolicy, Sample, SceneRepresentation};
use crate::taskforge::{SubtaskKind, TaskSpec};
use crate::world::{observe, RobotConfig, Scene};

/// Supervised samples and long-term store entries replayed from episodes.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub samples: Vec<Sample>,
    pub store: LongTermStore,
}

/// Replays the navigation steps of `traj`, building the same features the
/// memory policy would see and pairing them with the recorded actions.
///
/// Short-term memory is filled with confidence 1 for every step.
pub fn replay_trajectory(
    scene: &Scene,
    task: &TaskSpec,
    traj: &Trajectory,
    robot: &RobotConfig,
    oracle: &EmbeddingOracle,
    cfg: &RunConfig,
    out: &mut TrainingSet,
) -> Result<(), RunError> {
    let mut memory = ShortTermMemory::new(oracle.dim(), cfg.memory_capacity, cfg.pooling())?;
    let nav = traj.spans.iter().filter(|s| s.kind == SubtaskKind::MoveTo);
    for (stage, span) in nav.enumerate() {
        let category = scene.require_object(&span.object)?.category.clone();
        for step in &traj.steps[span.start_step..span.end_step] {
            let obs = observe(scene, &step.state, robot);
            let rep = SceneRepresentation::build(oracle, &obs);
            let x = features(&BackendInput {
                instruction: &task.instruction,
                scene: &rep,
                memory: &memory,
                stage,
            });
            let target = DecisionVector::one_hot(step.action);
            out.samples.push(Sample { x, target });
            out.store.insert(
                &category,
                StoreEntry {
                    obs: rep.fused.clone(),
                    act: target.0,
                },
            )?;
            memory.forget_and_append(rep.fused, 1.0)?;
        }
    }
    Ok(())
}

/// Runs the expert over `tasks` and replays every episode.
pub fn collect_expert_data(
    scenes: &[Scene],
    tasks: &[TaskSpec],
    cfg: &RunConfig,
    oracle: &EmbeddingOracle,
) -> Result<TrainingSet, RunError> {
    let robot = robot_of(cfg)?;
    let expert = ExpertPolicy { robot: robot.clone() };
    let run = run_suite(scenes, tasks, &expert, cfg, None)?;
    let mut set = TrainingSet {
        samples: Vec::new(),
        store: LongTermStore::new(cfg.top_k),
    };
    for ep in &run.episodes {
        let task = tasks
            .iter()
            .find(|t| t.id == ep.trajectory.task_id)
            .expect("episode comes from a task");
        let scene = scenes
            .iter()
            .find(|s| s.id() == task.scene_id)
            .expect("suite checked the scene");
        replay_trajectory(scene, task, &ep.trajectory, &robot, oracle, cfg, &mut set)?;
    }
    Ok(set)
}

pub(super) fn robot_of(cfg: &RunConfig) -> Result<RobotConfig, RunError> {
    RobotConfig::by_name(&cfg.robot).ok_or_else(|| RunError::Config(format!("unknown robot {:?}", cfg.robot)))
}
