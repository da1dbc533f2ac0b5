//! Chat-completion client and reply parsing for externally generated tasks.

use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::sample::choose_spawn;
use super::{Subtask, SubtaskKind, TaskError, TaskSpec};
use crate::world::{RobotConfig, Scene};

/// Environment variable that overrides the configured endpoint.
pub const LLM_ENDPOINT_ENV: &str = "LHNAV_LLM_ENDPOINT";

const FORWARD_PROMPT: &str = include_str!("../../prompts/forward_task.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmClientConfig {
    pub endpoint: String,
    pub model: String,
    /// Request timeout in seconds.
    pub timeout: f64,
    pub enabled: bool,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: "gpt-4".into(),
            timeout: 60.0,
            enabled: false,
        }
    }
}

impl LlmClientConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.enabled && self.endpoint.trim().is_empty() {
            return Err(LlmError::Config("endpoint is empty".into()));
        }
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            return Err(LlmError::Config(format!("timeout {} must be positive", self.timeout)));
        }
        Ok(())
    }

    /// Replaces the endpoint with `$LHNAV_LLM_ENDPOINT` when it is set.
    pub fn with_env_override(mut self) -> Self {
        if let Ok(url) = std::env::var(LLM_ENDPOINT_ENV) {
            if !url.trim().is_empty() {
                self.endpoint = url;
            }
        }
        self
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("llm client is disabled")]
    Disabled,
    #[error("llm config: {0}")]
    Config(String),
    #[error("network: {0}")]
    Network(String),
    #[error("llm service returned http {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unparseable reply at {field}: {message}")]
    Parse { field: String, message: String },
    #[error("invalid task: {0}")]
    Invalid(#[from] TaskError),
}

impl LlmError {
    fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        LlmError::Parse {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Anything that answers a system + user chat exchange.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, system: &str, user: &str) -> Result<String, LlmError>;
}

/// Blocking chat-completion client. Each instance owns its own connection
/// pool, so workers should build one client each.
pub struct HttpChatClient {
    cfg: LlmClientConfig,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(cfg: &LlmClientConfig) -> Result<Self, LlmError> {
        cfg.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout))
            .build()
            .map_err(|e| LlmError::Network(e.to_string()))?;
        Ok(Self { cfg: cfg.clone(), http })
    }
}

impl ChatBackend for HttpChatClient {
    fn complete(&self, system: &str, user: &str) -> Result<String, LlmError> {
        let body = json!({
            "model": self.cfg.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let resp = self
            .http
            .post(&self.cfg.endpoint)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    LlmError::Network(format!("request timed out after {} s", self.cfg.timeout))
                } else {
                    LlmError::Network(e.to_string())
                }
            })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| LlmError::Network(e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::Http {
                status: status.as_u16(),
                body: text,
            });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| LlmError::parse("response", e.to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .or_else(|| value.pointer("/message/content"))
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::parse("choices[0].message.content", "missing assistant message"))
    }
}

/// Scene listing as `{"Region <id>: <label>": [categories...]}`.
pub fn scene_prompt_input(scene: &Scene) -> String {
    let mut map = serde_json::Map::new();
    for (region_id, objects) in scene.objects_by_region() {
        let label = scene.region(region_id).map(|r| r.label.as_str()).unwrap_or("");
        let cats: Vec<Value> = objects.iter().map(|o| Value::String(o.category.clone())).collect();
        map.insert(format!("Region {region_id}: {label}"), Value::Array(cats));
    }
    Value::Object(map).to_string()
}

pub fn forward_prompt(scene: &Scene, robot: &RobotConfig) -> (String, String) {
    let (system, rest) = FORWARD_PROMPT.split_once("[Rules]").unwrap_or(("", FORWARD_PROMPT));
    let system = system.trim_start_matches("[System]").trim().to_string();
    let user = format!("[Rules]{rest}")
        .replace("{scene}", &scene_prompt_input(scene))
        .replace("{robot}", &robot.describe());
    (system, user)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedReply {
    pub instruction: String,
    /// (kind, raw argument) pairs in order.
    pub subtasks: Vec<(SubtaskKind, String)>,
}

/// Converts a Python-style literal (single-quoted strings, True/False/None,
/// backslash-escaped underscores) into JSON text.
fn pyish_to_json(src: &str) -> String {
    let mut out = String::with_capacity(src.len());
    let mut chars = src.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\'' || c == '"' {
            let quote = c;
            let mut s = String::new();
            while let Some(d) = chars.next() {
                if d == '\\' {
                    match chars.next() {
                        Some('n') => s.push('\n'),
                        Some('t') => s.push('\t'),
                        Some(e) => s.push(e),
                        None => {}
                    }
                } else if d == quote {
                    break;
                } else {
                    s.push(d);
                }
            }
            out.push_str(&Value::String(s).to_string());
        } else if c.is_ascii_alphabetic() {
            let mut word = String::from(c);
            while let Some(&d) = chars.peek() {
                if d.is_ascii_alphanumeric() || d == '_' {
                    word.push(d);
                    chars.next();
                } else {
                    break;
                }
            }
            out.push_str(match word.as_str() {
                "True" => "true",
                "False" => "false",
                "None" => "null",
                w => w,
            });
        } else {
            out.push(c);
        }
    }
    out
}

/// Parses entries like `Move_to('bag_0')` (also tolerating `Move\_to`).
pub fn parse_subtask_list(items: &[String]) -> Result<Vec<(SubtaskKind, String)>, LlmError> {
    let re = Regex::new(r#"^\s*(Move_to|Grab|Release)\s*\(\s*["']?([^"')]+?)["']?\s*\)\s*$"#).expect("static regex");
    items
        .iter()
        .enumerate()
        .map(|(i, raw)| {
            let item = raw.replace("\\_", "_");
            let caps = re
                .captures(&item)
                .ok_or_else(|| LlmError::parse(format!("Subtask list[{i}]"), format!("cannot parse {raw:?}")))?;
            let kind = match &caps[1] {
                "Move_to" => SubtaskKind::MoveTo,
                "Grab" => SubtaskKind::Grab,
                _ => SubtaskKind::Release,
            };
            Ok((kind, caps[2].trim().to_string()))
        })
        .collect()
}

/// Extracts the `Task instruction` / `Subtask list` dictionary from an
/// assistant message, which may wrap it in prose or code fences.
pub fn parse_reply(text: &str) -> Result<ParsedReply, LlmError> {
    let start = text.find('{').ok_or_else(|| LlmError::parse("reply", "no dictionary found"))?;
    let end = text.rfind('}').ok_or_else(|| LlmError::parse("reply", "unterminated dictionary"))?;
    if end < start {
        return Err(LlmError::parse("reply", "unterminated dictionary"));
    }
    let body = &text[start..=end];
    let value: Value = serde_json::from_str(body)
        .or_else(|_| serde_json::from_str(&pyish_to_json(body)))
        .map_err(|e| LlmError::parse("reply", e.to_string()))?;
    let instruction = value
        .get("Task instruction")
        .and_then(Value::as_str)
        .ok_or_else(|| LlmError::parse("Task instruction", "missing or not a string"))?
        .trim()
        .to_string();
    let list = value
        .get("Subtask list")
        .and_then(Value::as_array)
        .ok_or_else(|| LlmError::parse("Subtask list", "missing or not a list"))?;
    let items = list
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| LlmError::parse(format!("Subtask list[{i}]"), "not a string"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ParsedReply {
        instruction,
        subtasks: parse_subtask_list(&items)?,
    })
}

/// Resolves parsed subtasks against the scene. Grab/Release arguments may
/// name either an object id or the category of the object in question.
fn resolve(scene: &Scene, reply: &ParsedReply) -> Result<Vec<Subtask>, LlmError> {
    let mut out: Vec<Subtask> = Vec::new();
    let mut holding: Option<String> = None;
    for (i, (kind, arg)) in reply.subtasks.iter().enumerate() {
        let field = format!("Subtask list[{i}]");
        let unknown = || {
            LlmError::Invalid(TaskError::UnknownObject {
                field: field.clone(),
                id: arg.clone(),
            })
        };
        let matches = |id: &str| scene.object(id).is_some_and(|o| o.id == *arg || o.category == *arg);
        let subtask = match kind {
            SubtaskKind::MoveTo => {
                let obj = scene.object(arg).ok_or_else(unknown)?;
                Subtask::move_to(&obj.id, &obj.region_id)
            }
            SubtaskKind::Grab => {
                let prev = out.last().filter(|p| p.kind == SubtaskKind::MoveTo).map(|p| p.object.clone());
                let id = match prev {
                    Some(p) if matches(&p) => p,
                    _ => scene.object(arg).map(|o| o.id.clone()).ok_or_else(unknown)?,
                };
                holding = Some(id.clone());
                Subtask::grab(id)
            }
            SubtaskKind::Release => {
                let id = match holding.take() {
                    Some(h) if matches(&h) => h,
                    _ => scene.object(arg).map(|o| o.id.clone()).ok_or_else(unknown)?,
                };
                Subtask::release(id)
            }
        };
        out.push(subtask);
    }
    Ok(out)
}

/// Builds a validated task from an assistant reply. The spawn pose and id
/// are derived from `seed` exactly as the template sampler derives them.
pub fn task_from_reply(
    scene: &Scene,
    robot: &RobotConfig,
    reply: &ParsedReply,
    seed: u64,
) -> Result<TaskSpec, LlmError> {
    let subtasks = resolve(scene, reply)?;
    let targets: Vec<&str> = subtasks
        .iter()
        .filter(|s| s.kind == SubtaskKind::MoveTo)
        .map(|s| s.object.as_str())
        .collect();
    let first = *targets.first().ok_or(LlmError::Invalid(TaskError::MoveToCount(0)))?;
    let start = choose_spawn(scene, robot, first, &targets, seed)?;
    let task = TaskSpec {
        id: format!("{}-t{seed}", scene.id()),
        instruction: reply.instruction.clone(),
        subtasks,
        robot: robot.name.clone(),
        scene_id: scene.id().to_string(),
        seed,
        start,
    };
    task.validate(scene)?;
    Ok(task)
}

/// Asks `backend` for a task over `scene` and validates the answer.
pub fn generate_with(
    backend: &dyn ChatBackend,
    scene: &Scene,
    robot: &RobotConfig,
    seed: u64,
) -> Result<TaskSpec, LlmError> {
    let (system, user) = forward_prompt(scene, robot);
    let reply = backend.complete(&system, &user)?;
    task_from_reply(scene, robot, &parse_reply(&reply)?, seed)
}

pub fn generate_via_llm(
    scene: &Scene,
    robot: &RobotConfig,
    cfg: &LlmClientConfig,
    seed: u64,
) -> Result<TaskSpec, LlmError> {
    if !cfg.enabled {
        return Err(LlmError::Disabled);
    }
    let client = HttpChatClient::new(cfg)?;
    generate_with(&client, scene, robot, seed)
}
