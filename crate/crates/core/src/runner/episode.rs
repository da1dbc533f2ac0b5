use sha2::{Digest, Sha256};

use super::{RunConfig, RunError, SpanOutcome, StepRecord, SubtaskSpan, Trajectory};
use crate::expert::geodesic_distance;
use crate::metrics::{EpisodeResult, SubtaskRecord};
use crate::policy::{Policy, StepContext};
use crate::taskforge::{SubtaskKind, TaskSpec};
use crate::world::{apply_action, interact, observe, subtask_success, AgentState, Interaction, RobotConfig, Scene};

/// Per-episode RNG seed from the run seed and the task id.
pub fn episode_seed(seed: u64, task_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(task_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("eight bytes"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub trajectory: Trajectory,
    pub result: EpisodeResult,
    pub final_state: AgentState,
}

fn geodesic_to(scene: &Scene, task: &TaskSpec, state: &AgentState, object: &str) -> Result<f64, RunError> {
    let obj = scene.require_object(object)?;
    geodesic_distance(scene, &state.position, &obj.position)?.ok_or_else(|| RunError::Unreachable {
        task: task.id.clone(),
        object: object.to_string(),
    })
}

/// Runs every subtask of `task` in order with a fresh agent from `policy`.
///
/// Navigation subtasks end at `stop` or after `cfg.budget` steps; failures
/// never abort the episode and the pose carries over.
pub fn run_episode(scene: &Scene, task: &TaskSpec, policy: &dyn Policy, cfg: &RunConfig) -> Result<Episode, RunError> {
    cfg.validate()?;
    task.validate(scene)?;
    let robot = RobotConfig::by_name(&task.robot)
        .ok_or_else(|| RunError::Config(format!("task {} names unknown robot {:?}", task.id, task.robot)))?;
    let mut agent = policy.agent(scene, task, episode_seed(cfg.seed, &task.id))?;
    let mut state = task.start.clone();
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut spans = Vec::new();
    let mut records = Vec::new();
    let mut stage = 0;

    for (i, sub) in task.subtasks.iter().enumerate() {
        let start_step = steps.len();
        let start_state = state.clone();
        if sub.kind != SubtaskKind::MoveTo {
            let place = task
                .place_of(i)
                .ok_or_else(|| RunError::Config(format!("task {} subtask {i} has no place", task.id)))?;
            let kind = if sub.kind == SubtaskKind::Grab {
                Interaction::Grab
            } else {
                Interaction::Release
            };
            let (next, success) = interact(scene, &state, kind, &sub.object, place)?;
            state = next;
            spans.push(SubtaskSpan {
                subtask: i,
                kind: sub.kind,
                object: sub.object.clone(),
                start_step,
                end_step: start_step,
                start_state,
                gt: None,
                outcome: SpanOutcome::Interacted { success },
            });
            continue;
        }

        let gt = geodesic_to(scene, task, &state, &sub.object)?.max(scene.cell_size());
        let mut oracle_hit = false;
        let mut path_taken = 0.0;
        let mut stopped = false;
        for k in 0..cfg.budget {
            oracle_hit |= subtask_success(scene, &state, &sub.object)?;
            let observation = observe(scene, &state, &robot);
            let action = agent.act(&StepContext {
                scene,
                task,
                robot: &robot,
                state: &state,
                observation: &observation,
                subtask: i,
                stage,
                target: &sub.object,
                step: steps.len(),
                step_in_subtask: k,
            })?;
            let outcome = apply_action(scene, &state, action, &robot);
            steps.push(StepRecord {
                step: steps.len(),
                state: state.clone(),
                action,
                collided: outcome.collided,
                observation_id: observation.digest(),
                subtask: i,
            });
            path_taken += state.position.distance(&outcome.state.position);
            state = outcome.state;
            if outcome.stopped {
                stopped = true;
                break;
            }
        }
        oracle_hit |= subtask_success(scene, &state, &sub.object)?;
        let success = stopped && subtask_success(scene, &state, &sub.object)?;
        let ne = geodesic_to(scene, task, &state, &sub.object)?;
        records.push(SubtaskRecord {
            success,
            ne,
            gt,
            steps: steps.len() - start_step,
            path_taken,
            oracle_hit,
            truncated: !stopped,
        });
        spans.push(SubtaskSpan {
            subtask: i,
            kind: sub.kind,
            object: sub.object.clone(),
            start_step,
            end_step: steps.len(),
            start_state,
            gt: Some(gt),
            outcome: if stopped {
                SpanOutcome::Stopped
            } else {
                SpanOutcome::Truncated
            },
        });
        stage += 1;
    }

    Ok(Episode {
        trajectory: Trajectory {
            task_id: task.id.clone(),
            config_hash: cfg.hash(),
            spans,
            steps,
        },
        result: EpisodeResult {
            task_id: task.id.clone(),
            records,
        },
        final_state: state,
    })
}
