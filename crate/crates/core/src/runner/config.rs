use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunError;
use crate::memory::{CeMode, PoolingMode, DEFAULT_CAPACITY, DEFAULT_TOP_K};
use crate::metrics::NeMode;
use crate::policy::{DEFAULT_COT_EVERY, DEFAULT_DIM};

pub const DEFAULT_BUDGET: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    #[default]
    Expert,
    Random,
    Memory,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Expert => "expert",
            PolicyKind::Random => "random",
            PolicyKind::Memory => "memory",
        }
    }
}

impl FromStr for PolicyKind {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "expert" => Ok(PolicyKind::Expert),
            "random" => Ok(PolicyKind::Random),
            "memory" => Ok(PolicyKind::Memory),
            other => Err(RunError::Config(format!("unknown policy {other:?}"))),
        }
    }
}

/// Run settings. Loaded from a `key = value` file; `#` starts a comment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Steps per navigation subtask.
    pub budget: usize,
    pub seed: u64,
    pub policy: PolicyKind,
    pub robot: String,
    pub workers: usize,
    pub literal_ne: bool,
    pub literal_ce: bool,
    pub literal_pooling: bool,
    pub memory_capacity: usize,
    pub top_k: usize,
    pub embed_dim: usize,
    pub cot_every: usize,
    pub sample: bool,
    pub scenes: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub store: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            seed: 0,
            policy: PolicyKind::Expert,
            robot: "spot".into(),
            workers: 1,
            literal_ne: false,
            literal_ce: false,
            literal_pooling: false,
            memory_capacity: DEFAULT_CAPACITY,
            top_k: DEFAULT_TOP_K,
            embed_dim: DEFAULT_DIM,
            cot_every: DEFAULT_COT_EVERY,
            sample: false,
            scenes: None,
            tasks: None,
            output: None,
            weights: None,
            store: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, RunError> {
    value
        .parse()
        .map_err(|_| RunError::Config(format!("bad value {value:?} for {key}")))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        if self.budget == 0 {
            return Err(RunError::Config("budget must be positive".into()));
        }
        if self.workers == 0 {
            return Err(RunError::Config("workers must be positive".into()));
        }
        if self.top_k == 0 || self.embed_dim < 2 || self.cot_every == 0 {
            return Err(RunError::Config("top_k, embed_dim and cot_every must be positive".into()));
        }
        Ok(())
    }

    pub fn ne_mode(&self) -> NeMode {
        if self.literal_ne {
            NeMode::Literal
        } else {
            NeMode::ForcedStop
        }
    }

    pub fn ce_mode(&self) -> CeMode {
        if self.literal_ce {
            CeMode::Literal
        } else {
            CeMode::Imitation
        }
    }

    pub fn pooling(&self) -> PoolingMode {
        if self.literal_pooling {
            PoolingMode::Triple
        } else {
            PoolingMode::Pair
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), RunError> {
        let path = || (!value.is_empty()).then(|| PathBuf::from(value));
        match key {
            "budget" => self.budget = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "policy" => self.policy = value.parse()?,
            "robot" => self.robot = value.to_string(),
            "workers" => self.workers = parse(key, value)?,
            "literal_ne" => self.literal_ne = parse(key, value)?,
            "literal_ce" => self.literal_ce = parse(key, value)?,
            "literal_pooling" => self.literal_pooling = parse(key, value)?,
            "memory_capacity" => self.memory_capacity = parse(key, value)?,
            "top_k" => self.top_k = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "cot_every" => self.cot_every = parse(key, value)?,
            "sample" => self.sample = parse(key, value)?,
            "scenes" => self.scenes = path(),
            "tasks" => self.tasks = path(),
            "output" => self.output = path(),
            "weights" => self.weights = path(),
            "store" => self.store = path(),
            other => return Err(RunError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn parse_text(text: &str) -> Result<Self, RunError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| RunError::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_text(&text)
    }

    /// Settings that influence episode outcomes, in a fixed order. Worker
    /// count and output paths are left out.
    pub fn canonical(&self) -> String {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        [
            format!("budget = {}", self.budget),
            format!("seed = {}", self.seed),
            format!("policy = {}", self.policy.name()),
            format!("robot = {}", self.robot),
            format!("literal_ne = {}", self.literal_ne),
            format!("literal_ce = {}", self.literal_ce),
            format!("literal_pooling = {}", self.literal_pooling),
            format!("memory_capacity = {}", self.memory_capacity),
            format!("top_k = {}", self.top_k),
            format!("embed_dim = {}", self.embed_dim),
            format!("cot_every = {}", self.cot_every),
            format!("sample = {}", self.sample),
            format!("weights = {}", opt(&self.weights)),
            format!("store = {}", opt(&self.store)),
        ]
        .join("\n")
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}
