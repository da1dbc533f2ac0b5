//! Forward task generation: multi-stage navigation tasks built from a scene
//! and a robot, either from offline templates or an external chat service.

mod llm;
mod sample;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{AgentState, Scene, WorldError};

pub use llm::{
    forward_prompt, generate_via_llm, generate_with, parse_reply, parse_subtask_list, scene_prompt_input,
    task_from_reply, ChatBackend, HttpChatClient, LlmClientConfig, LlmError, ParsedReply, LLM_ENDPOINT_ENV,
};
pub use sample::{choose_spawn, render_instruction, sample_task, sample_task_with, TaskOptions, MIN_SPAWN_DISTANCE};

pub const MIN_MOVE_TO: usize = 2;
pub const MAX_MOVE_TO: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubtaskKind {
    #[serde(rename = "Move_to")]
    MoveTo,
    Grab,
    Release,
}

impl SubtaskKind {
    pub fn name(self) -> &'static str {
        match self {
            SubtaskKind::MoveTo => "Move_to",
            SubtaskKind::Grab => "Grab",
            SubtaskKind::Release => "Release",
        }
    }
}

/// One unit of a task. `object` is always a scene object id; `region_id` is
/// present for `Move_to` only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtask {
    pub kind: SubtaskKind,
    pub object: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_id: Option<String>,
}

impl Subtask {
    pub fn move_to(object: impl Into<String>, region_id: impl Into<String>) -> Self {
        Self {
            kind: SubtaskKind::MoveTo,
            object: object.into(),
            region_id: Some(region_id.into()),
        }
    }

    pub fn grab(object: impl Into<String>) -> Self {
        Self {
            kind: SubtaskKind::Grab,
            object: object.into(),
            region_id: None,
        }
    }

    pub fn release(object: impl Into<String>) -> Self {
        Self {
            kind: SubtaskKind::Release,
            object: object.into(),
            region_id: None,
        }
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}('{}')", self.kind.name(), self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub instruction: String,
    pub subtasks: Vec<Subtask>,
    pub robot: String,
    pub scene_id: String,
    pub seed: u64,
    /// Spawn pose of the agent.
    pub start: AgentState,
}

impl TaskSpec {
    pub fn move_to_count(&self) -> usize {
        self.subtasks.iter().filter(|s| s.kind == SubtaskKind::MoveTo).count()
    }

    /// Indices and object ids of the navigation subtasks, in order.
    pub fn move_targets(&self) -> impl Iterator<Item = (usize, &str)> {
        self.subtasks
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind == SubtaskKind::MoveTo)
            .map(|(i, s)| (i, s.object.as_str()))
    }

    /// Object at which subtask `index` takes place: a Move_to's own target,
    /// or the Move_to immediately preceding a Grab/Release.
    pub fn place_of(&self, index: usize) -> Option<&str> {
        let s = self.subtasks.get(index)?;
        match s.kind {
            SubtaskKind::MoveTo => Some(&s.object),
            _ => {
                let prev = self.subtasks.get(index.checked_sub(1)?)?;
                (prev.kind == SubtaskKind::MoveTo).then_some(prev.object.as_str())
            }
        }
    }

    /// Checks every structural invariant against `scene`.
    pub fn validate(&self, scene: &Scene) -> Result<(), TaskError> {
        if self.scene_id != scene.id() {
            return Err(TaskError::SceneMismatch {
                task: self.scene_id.clone(),
                scene: scene.id().to_string(),
            });
        }
        let n = self.move_to_count();
        if !(MIN_MOVE_TO..=MAX_MOVE_TO).contains(&n) {
            return Err(TaskError::MoveToCount(n));
        }
        if !scene.is_free_point(&self.start.position) {
            return Err(TaskError::World(WorldError::NotFree {
                x: self.start.position.x,
                y: self.start.position.y,
            }));
        }
        let lower = self.instruction.to_lowercase();
        let mut holding: Option<&str> = None;
        for (i, s) in self.subtasks.iter().enumerate() {
            let Some(obj) = scene.object(&s.object) else {
                return Err(TaskError::UnknownObject {
                    field: format!("subtasks[{i}]"),
                    id: s.object.clone(),
                });
            };
            match s.kind {
                SubtaskKind::MoveTo => {
                    let Some(region_id) = &s.region_id else {
                        return Err(TaskError::MissingField {
                            field: format!("subtasks[{i}].region_id"),
                        });
                    };
                    let Some(region) = scene.region(region_id) else {
                        return Err(TaskError::UnknownRegion {
                            field: format!("subtasks[{i}].region_id"),
                            id: region_id.clone(),
                        });
                    };
                    if obj.region_id != *region_id {
                        return Err(TaskError::RegionMismatch {
                            object: s.object.clone(),
                            region: region_id.clone(),
                        });
                    }
                    if !lower.contains(&region.label.to_lowercase()) {
                        return Err(TaskError::RegionNotMentioned(region.label.clone()));
                    }
                }
                SubtaskKind::Grab | SubtaskKind::Release => {
                    let Some(place) = self.place_of(i) else {
                        return Err(TaskError::NoApproach { index: i });
                    };
                    if s.kind == SubtaskKind::Grab {
                        if place != s.object {
                            return Err(TaskError::NoApproach { index: i });
                        }
                        if let Some(h) = holding {
                            return Err(TaskError::IllegalGrab {
                                index: i,
                                reason: format!("arm already holds {h:?}"),
                            });
                        }
                        if !obj.portable {
                            return Err(TaskError::IllegalGrab {
                                index: i,
                                reason: format!("{:?} is not portable", s.object),
                            });
                        }
                        holding = Some(&s.object);
                    } else {
                        if holding != Some(s.object.as_str()) {
                            return Err(TaskError::IllegalRelease {
                                index: i,
                                reason: format!("arm does not hold {:?}", s.object),
                            });
                        }
                        if place == s.object {
                            return Err(TaskError::IllegalRelease {
                                index: i,
                                reason: "release place is the carried object".into(),
                            });
                        }
                        holding = None;
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("{field}: unknown object {id:?}")]
    UnknownObject { field: String, id: String },
    #[error("{field}: unknown region {id:?}")]
    UnknownRegion { field: String, id: String },
    #[error("{field}: missing")]
    MissingField { field: String },
    #[error("object {object:?} is not in region {region:?}")]
    RegionMismatch { object: String, region: String },
    #[error("instruction does not mention region {0:?}")]
    RegionNotMentioned(String),
    #[error("task has {0} Move_to subtasks, expected {MIN_MOVE_TO} to {MAX_MOVE_TO}")]
    MoveToCount(usize),
    #[error("subtask {index} is not preceded by a Move_to to its place")]
    NoApproach { index: usize },
    #[error("subtask {index}: illegal Grab: {reason}")]
    IllegalGrab { index: usize, reason: String },
    #[error("subtask {index}: illegal Release: {reason}")]
    IllegalRelease { index: usize, reason: String },
    #[error("task is for scene {task:?}, got {scene:?}")]
    SceneMismatch { task: String, scene: String },
    #[error("scene too sparse: {0}")]
    TooSparse(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("task file json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Reads a task file (a JSON array of tasks).
pub fn load_tasks(path: &Path) -> Result<Vec<TaskSpec>, TaskError> {
    let text = std::fs::read_to_string(path).map_err(|source| TaskError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_tasks(path: &Path, tasks: &[TaskSpec]) -> Result<(), TaskError> {
    let text = serde_json::to_string_pretty(tasks)? + "\n";
    std::fs::write(path, text).map_err(|source| TaskError::Io {
        path: path.to_path_buf(),
        source,
    })
}
