//! Backward generation: split an action trace into labelled segments and
//! render step-by-step instructions from per-segment scene tags.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::runner::{StepRecord, Trajectory};
use crate::taskforge::{ChatBackend, LlmError, SubtaskKind, TaskSpec};
use crate::world::{observe, Action, RobotConfig, Scene};

const STEP_PROMPT: &str = include_str!("../prompts/step_instruction.txt");

/// Maximum number of tags kept per segment.
pub const MAX_TAGS: usize = 5;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("empty action trace")]
    Empty,
    #[error("action {index} is a stop; strip the trailing stop before splitting")]
    UnexpectedStop { index: usize },
    #[error("unknown action symbol {0:?}")]
    BadSymbol(char),
    #[error("segment {start}..={end} is out of range for {len} steps")]
    OutOfRange { start: usize, end: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentLabel {
    MoveForward,
    TurnLeft,
    TurnRight,
}

impl SegmentLabel {
    pub fn token(self) -> &'static str {
        match self {
            SegmentLabel::MoveForward => "move_forward",
            SegmentLabel::TurnLeft => "turn_left",
            SegmentLabel::TurnRight => "turn_right",
        }
    }

    fn of_turn(action: Action) -> Self {
        if action == Action::Left {
            SegmentLabel::TurnLeft
        } else {
            SegmentLabel::TurnRight
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagKind {
    Region,
    Object,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tag {
    pub name: String,
    pub kind: TagKind,
    /// Fraction of the segment's steps at which the tag applied.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub label: SegmentLabel,
    /// Inclusive bounds into the action trace.
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub tags: Vec<Tag>,
}

/// A detected run of turns: first and last absolute index of the symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TurnRecord {
    pub start: usize,
    pub end: usize,
    pub label: SegmentLabel,
}

/// Parses a compact trace such as `"FFLLR"`.
pub fn actions_from_symbols(symbols: &str) -> Result<Vec<Action>, SplitError> {
    symbols
        .chars()
        .map(|c| match c {
            'F' => Ok(Action::Forward),
            'L' => Ok(Action::Left),
            'R' => Ok(Action::Right),
            other => Err(SplitError::BadSymbol(other)),
        })
        .collect()
}

/// Window scan for each turn symbol, left turns first, then sorted.
pub fn turn_records(actions: &[Action]) -> Vec<TurnRecord> {
    let mut records = Vec::new();
    for symbol in [Action::Left, Action::Right] {
        let mut i = 0;
        while i + 3 < actions.len() {
            let hits: Vec<usize> = (i..i + 3).filter(|&j| actions[j] == symbol).collect();
            if hits.len() >= 2 {
                let (first, last) = (hits[0], hits[hits.len() - 1]);
                records.push(TurnRecord {
                    start: first,
                    end: last,
                    label: SegmentLabel::of_turn(symbol),
                });
                i = last + 1;
            } else {
                i += 1;
            }
        }
    }
    records.sort();
    records
}

/// Folds sorted records: same-label records starting within three actions
/// of the current end are absorbed.
pub fn merge_records(records: &[TurnRecord]) -> Vec<TurnRecord> {
    let Some((&first, rest)) = records.split_first() else {
        return Vec::new();
    };
    let mut merged = Vec::new();
    let mut cur = first;
    for &r in rest {
        if r.start <= cur.end + 3 && r.label == cur.label {
            cur.end = cur.end.max(r.end);
        } else {
            merged.push(cur);
            cur = r;
        }
    }
    merged.push(cur);
    merged
}

/// Splits an action trace (no stops) into forward fillers and turn segments.
///
/// Turn segments pad their record by one action on each side, clamped to
/// the trace. Unless `literal` is set, a trailing forward segment covers any
/// actions after the last turn record (or the whole trace if none fired).
pub fn split_trajectory(actions: &[Action], literal: bool) -> Result<Vec<Segment>, SplitError> {
    if actions.is_empty() {
        return Err(SplitError::Empty);
    }
    if let Some(index) = actions.iter().position(|&a| a == Action::Stop) {
        return Err(SplitError::UnexpectedStop { index });
    }
    let len = actions.len() as isize;
    let seg = |label, start: isize, end: isize| Segment {
        label,
        start: start.max(0) as usize,
        end: end.min(len - 1) as usize,
        tags: Vec::new(),
    };
    let mut out = Vec::new();
    let mut last_end: isize = -1;
    for r in merge_records(&turn_records(actions)) {
        let (start, end) = (r.start as isize, r.end as isize);
        if last_end + 2 < start {
            out.push(seg(SegmentLabel::MoveForward, last_end + 1, start - 1));
        }
        out.push(seg(r.label, start - 1, end + 1));
        last_end = end;
    }
    if !literal && last_end < len - 1 {
        out.push(seg(SegmentLabel::MoveForward, last_end + 1, len - 1));
    }
    Ok(out)
}

/// Most frequent region labels and visible categories over the steps of a
/// segment, with frequency as confidence. Ties break by name.
pub fn tag_segment(
    scene: &Scene,
    steps: &[StepRecord],
    seg: &Segment,
    robot: &RobotConfig,
) -> Result<Vec<Tag>, SplitError> {
    if seg.start > seg.end || seg.end >= steps.len() {
        return Err(SplitError::OutOfRange {
            start: seg.start,
            end: seg.end,
            len: steps.len(),
        });
    }
    let mut counts: BTreeMap<(String, u8), usize> = BTreeMap::new();
    let span = &steps[seg.start..=seg.end];
    for step in span {
        if let Some(region) = scene.region_at(&step.state.position) {
            *counts.entry((region.label.clone(), 0)).or_default() += 1;
        }
        let obs = observe(scene, &step.state, robot);
        let mut seen: Vec<&str> = obs.visible().map(|o| o.category.as_str()).collect();
        seen.sort_unstable();
        seen.dedup();
        for cat in seen {
            *counts.entry((cat.to_string(), 1)).or_default() += 1;
        }
    }
    let mut tags: Vec<Tag> = counts
        .into_iter()
        .map(|((name, k), n)| Tag {
            name,
            kind: if k == 0 { TagKind::Region } else { TagKind::Object },
            confidence: n as f64 / span.len() as f64,
        })
        .collect();
    tags.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then_with(|| a.name.cmp(&b.name)));
    tags.truncate(MAX_TAGS);
    Ok(tags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionStep {
    pub action: SegmentLabel,
    pub tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepByStepTask {
    /// Source trajectory (task id) and subtask index, for traceability.
    pub trajectory_id: String,
    pub subtask: usize,
    pub target: String,
    pub steps: Vec<InstructionStep>,
    pub instruction: String,
}

fn overlaps_target(tag: &str, target: &str) -> bool {
    tag.contains(target) || target.contains(tag)
}

/// Forward steps prefer region tags, turns prefer object tags; otherwise any
/// remaining tag. Highest confidence wins, then lexicographic order.
fn choose_tag(seg: &Segment, target: &str) -> Option<String> {
    let preferred = match seg.label {
        SegmentLabel::MoveForward => TagKind::Region,
        _ => TagKind::Object,
    };
    let usable = || seg.tags.iter().filter(|t| !overlaps_target(&t.name, target));
    let best = |kind: Option<TagKind>| {
        usable()
            .filter(|t| kind.is_none_or(|k| t.kind == k))
            .min_by(|a, b| b.confidence.total_cmp(&a.confidence).then_with(|| a.name.cmp(&b.name)))
            .map(|t| t.name.clone())
    };
    best(Some(preferred)).or_else(|| best(None))
}

fn clause(label: SegmentLabel, tag: Option<&str>) -> String {
    match (label, tag) {
        (SegmentLabel::MoveForward, Some(t)) => format!("move forward through the {t}"),
        (SegmentLabel::MoveForward, None) => "move forward".to_string(),
        (SegmentLabel::TurnLeft, Some(t)) => format!("make a left turn at the {t}"),
        (SegmentLabel::TurnLeft, None) => "make a left turn".to_string(),
        (SegmentLabel::TurnRight, Some(t)) => format!("turn right at the {t}"),
        (SegmentLabel::TurnRight, None) => "turn right".to_string(),
    }
}

fn final_clause(label: SegmentLabel, target: &str, only: bool) -> String {
    let lead = if only { "" } else { "finally " };
    match label {
        SegmentLabel::MoveForward => format!("{lead}go straight to the {target}"),
        SegmentLabel::TurnLeft => format!("{lead}turn left toward the {target}"),
        SegmentLabel::TurnRight => format!("{lead}turn right toward the {target}"),
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

/// Template rendering: one clause per segment, the last naming the target.
/// A forward clause followed by a turn is joined with "and".
pub fn render_step_instruction(target: &str, segments: &[Segment]) -> StepByStepTask {
    let steps: Vec<InstructionStep> = segments
        .iter()
        .map(|s| InstructionStep {
            action: s.label,
            tag: choose_tag(s, target),
        })
        .collect();
    let mut text = String::new();
    for (i, step) in steps.iter().enumerate() {
        let last = i + 1 == steps.len();
        let part = if last {
            final_clause(step.action, target, steps.len() == 1)
        } else {
            clause(step.action, step.tag.as_deref())
        };
        if i > 0 {
            let joined = steps[i - 1].action == SegmentLabel::MoveForward
                && step.action != SegmentLabel::MoveForward
                && !last;
            text.push_str(if joined { " and " } else { ", " });
        }
        text.push_str(&part);
    }
    let instruction = if text.is_empty() {
        String::new()
    } else {
        capitalize(&text) + "."
    };
    StepByStepTask {
        trajectory_id: String::new(),
        subtask: 0,
        target: target.to_string(),
        steps,
        instruction,
    }
}

/// Input dictionary for the instruction-writing prompt.
pub fn step_prompt_input(target: &str, segments: &[Segment]) -> String {
    let mut map = serde_json::Map::new();
    map.insert("target".into(), json!(target));
    for (i, s) in segments.iter().enumerate() {
        let tags: Vec<&str> = s.tags.iter().map(|t| t.name.as_str()).collect();
        map.insert(format!("step_{i}"), json!({"action": s.label.token(), "tags": tags}));
    }
    serde_json::Value::Object(map).to_string()
}

/// Same step selection as the template renderer, but the sentence comes
/// from a chat backend.
pub fn render_via_llm(
    backend: &dyn ChatBackend,
    target: &str,
    segments: &[Segment],
) -> Result<StepByStepTask, LlmError> {
    let (system, rest) = STEP_PROMPT.split_once("[Rules]").unwrap_or(("", STEP_PROMPT));
    let system = system.trim_start_matches("[System]").trim();
    let user = format!("[Rules]{rest}").replace("{input}", &step_prompt_input(target, segments));
    let reply = backend.complete(system, &user)?;
    let mut task = render_step_instruction(target, segments);
    task.instruction = reply.trim().to_string();
    Ok(task)
}

/// Splits every Move_to span of a recorded episode and renders a
/// step-by-step task for each nonempty one.
pub fn split_episode(
    scene: &Scene,
    task: &TaskSpec,
    traj: &Trajectory,
    robot: &RobotConfig,
    literal: bool,
) -> Result<Vec<StepByStepTask>, SplitError> {
    let mut out = Vec::new();
    for span in traj.spans.iter().filter(|s| s.kind == SubtaskKind::MoveTo) {
        let mut steps = &traj.steps[span.start_step..span.end_step];
        if steps.last().is_some_and(|s| s.action == Action::Stop) {
            steps = &steps[..steps.len() - 1];
        }
        let actions: Vec<Action> = steps.iter().map(|s| s.action).collect();
        if actions.is_empty() {
            continue;
        }
        let mut segments = split_trajectory(&actions, literal)?;
        for seg in &mut segments {
            seg.tags = tag_segment(scene, steps, seg, robot)?;
        }
        if segments.is_empty() {
            continue;
        }
        let target = scene
            .object(&span.object)
            .map(|o| o.category.clone())
            .unwrap_or_else(|| span.object.clone());
        let mut sbs = render_step_instruction(&target, &segments);
        sbs.trajectory_id = task.id.clone();
        sbs.subtask = span.subtask;
        out.push(sbs);
    }
    Ok(out)
}
