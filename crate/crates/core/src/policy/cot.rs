use std::collections::BTreeMap;

use crate::taskforge::{SubtaskKind, TaskSpec};
use crate::world::{Observation, Scene};

const DECISION_PROMPT: &str = include_str!("../../prompts/decision.json");

/// Field order of the decision prompt template.
pub const DECISION_FIELDS: [&str; 4] = ["Task", "History", "Observation", "Output Hint"];

/// The decision prompt template as ordered `(field, text)` pairs, with the
/// instruction appended to the task field. For a language-model backend.
pub fn decision_prompt(instruction: &str) -> Vec<(&'static str, String)> {
    let mut fields: BTreeMap<String, String> =
        serde_json::from_str(DECISION_PROMPT).expect("decision template is valid JSON");
    DECISION_FIELDS
        .iter()
        .map(|&k| {
            let mut text = fields.remove(k).expect("decision template has every field");
            if k == "Task" {
                text.push_str(instruction);
            }
            (k, text)
        })
        .collect()
}

/// Steps between two sub-goal refinements.
pub const DEFAULT_COT_EVERY: usize = 10;

pub struct CotContext<'a> {
    pub scene: &'a Scene,
    pub task: &'a TaskSpec,
    /// Index into `task.subtasks`.
    pub subtask: usize,
    pub instruction: &'a str,
    pub history: &'a [Observation],
}

/// Produces an ordered list of sub-goal categories.
pub trait CotFeedback: Send + Sync {
    fn refine(&self, ctx: &CotContext<'_>) -> Vec<String>;
}

/// Returns the categories of the navigation targets not yet reached.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleCot;

impl CotFeedback for RuleCot {
    fn refine(&self, ctx: &CotContext<'_>) -> Vec<String> {
        ctx.task.subtasks[ctx.subtask.min(ctx.task.subtasks.len())..]
            .iter()
            .filter(|s| s.kind == SubtaskKind::MoveTo)
            .filter_map(|s| ctx.scene.object(&s.object))
            .map(|o| o.category.clone())
            .collect()
    }
}
