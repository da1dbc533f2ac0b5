use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::taskforge::SubtaskKind;
use crate::world::{Action, AgentState};

/// One executed action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Pose before the action.
    pub state: AgentState,
    pub action: Action,
    pub collided: bool,
    /// Digest of the observation seen before acting.
    pub observation_id: String,
    /// Index into the task's subtask list.
    pub subtask: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SpanOutcome {
    /// Ended by a `stop` action.
    Stopped,
    /// Budget ran out.
    Truncated,
    /// Manipulation step; no actions recorded.
    Interacted { success: bool },
}

/// Step range `[start_step, end_step)` belonging to one subtask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskSpan {
    pub subtask: usize,
    pub kind: SubtaskKind,
    pub object: String,
    pub start_step: usize,
    pub end_step: usize,
    pub start_state: AgentState,
    /// Geodesic length at subtask start (navigation only).
    pub gt: Option<f64>,
    pub outcome: SpanOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    task_id: String,
    config_hash: String,
    spans: Vec<SubtaskSpan>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub task_id: String,
    pub config_hash: String,
    pub spans: Vec<SubtaskSpan>,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    /// Checks contiguity of step indices and span boundaries.
    pub fn check(&self) -> Result<(), String> {
        for (i, s) in self.steps.iter().enumerate() {
            if s.step != i {
                return Err(format!("step {i} carries index {}", s.step));
            }
        }
        if self.steps.windows(2).any(|w| w[1].subtask < w[0].subtask) {
            return Err("subtask indices decrease".into());
        }
        let mut cursor = 0;
        for span in &self.spans {
            if span.start_step != cursor || span.end_step < span.start_step || span.end_step > self.steps.len() {
                return Err(format!("span for subtask {} is not contiguous", span.subtask));
            }
            let steps = &self.steps[span.start_step..span.end_step];
            if steps.iter().any(|s| s.subtask != span.subtask) {
                return Err(format!("span for subtask {} holds foreign steps", span.subtask));
            }
            if span.outcome == SpanOutcome::Stopped && steps.last().map(|s| s.action) != Some(Action::Stop) {
                return Err(format!("subtask {} is marked stopped without a stop", span.subtask));
            }
            cursor = span.end_step;
        }
        if cursor != self.steps.len() {
            return Err("steps after the last span".into());
        }
        Ok(())
    }

    /// Header line (task id, config hash, spans) then one step per line.
    pub fn to_jsonl(&self) -> String {
        let header = Header {
            task_id: self.task_id.clone(),
            config_hash: self.config_hash.clone(),
            spans: self.spans.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serialization cannot fail");
        out.push('\n');
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).expect("step serialization cannot fail"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), RunError> {
        let io = |source| RunError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let io = |source| RunError::Io {
            path: path.to_path_buf(),
            source,
        };
        let bad = |line: usize, message: String| RunError::Format {
            path: path.to_path_buf(),
            line,
            message,
        };
        let file = std::fs::File::open(path).map_err(io)?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let header: Header = serde_json::from_str(&first.map_err(io)?).map_err(|e| bad(1, e.to_string()))?;
        let mut steps = Vec::new();
        for (n, line) in lines {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            steps.push(serde_json::from_str(&line).map_err(|e| bad(n + 1, e.to_string()))?);
        }
        let t = Trajectory {
            task_id: header.task_id,
            config_hash: header.config_hash,
            spans: header.spans,
            steps,
        };
        t.check().map_err(|m| bad(0, m))?;
        Ok(t)
    }
}
