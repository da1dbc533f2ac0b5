//! Navigation policies: the memory-augmented agent plus random and expert
//! baselines.

mod backend;
mod cot;
mod embedding;

use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use backend::{
    feature_dim, features, stable_learning_rate, train_alternating, train_backend, BackendInput, LinearSoftmax,
    PolicyBackend, Sample, TrainReport, UniformBackend, ACTIONS, STAGE_SLOTS,
};
pub use cot::{decision_prompt, CotContext, CotFeedback, RuleCot, DECISION_FIELDS, DEFAULT_COT_EVERY};
pub use embedding::{EmbeddingOracle, History, SceneRepresentation, DEFAULT_DIM, DEFAULT_SALT};

use crate::expert::{Expert, ExpertError};
use crate::memory::{weight_decision, DecisionVector, LongTermStore, MemoryError, PoolingMode, ShortTermMemory};
use crate::taskforge::TaskSpec;
use crate::world::{Action, AgentState, Observation, RobotConfig, Scene};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error("invalid policy configuration: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("unknown policy {0:?} (expected expert, random or memory)")]
    UnknownPolicy(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Per-step view handed to an agent.
pub struct StepContext<'a> {
    pub scene: &'a Scene,
    pub task: &'a TaskSpec,
    pub robot: &'a RobotConfig,
    pub state: &'a AgentState,
    pub observation: &'a Observation,
    /// Index into `task.subtasks`.
    pub subtask: usize,
    /// Ordinal among the navigation subtasks.
    pub stage: usize,
    pub target: &'a str,
    pub step: usize,
    pub step_in_subtask: usize,
}

/// Stateful per-episode decision maker.
pub trait Agent {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Action, PolicyError>;
}

/// Factory for per-episode agents. Shared across worker threads.
pub trait Policy: Send + Sync {
    fn name(&self) -> &str;
    fn agent<'a>(&'a self, scene: &'a Scene, task: &TaskSpec, seed: u64) -> Result<Box<dyn Agent + 'a>, PolicyError>;
}

/// Uniform over the four actions.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

struct RandomAgent {
    rng: ChaCha8Rng,
}

impl Agent for RandomAgent {
    fn act(&mut self, _ctx: &StepContext<'_>) -> Result<Action, PolicyError> {
        Ok(Action::ALL[self.rng.random_range(0..4)])
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn agent<'a>(&'a self, _scene: &'a Scene, _task: &TaskSpec, seed: u64) -> Result<Box<dyn Agent + 'a>, PolicyError> {
        Ok(Box::new(RandomAgent {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }))
    }
}

/// Oracle policy driven by the grid expert.
#[derive(Debug, Clone, Default)]
pub struct ExpertPolicy {
    pub robot: RobotConfig,
}

struct ExpertAgent<'a> {
    expert: Expert<'a>,
}

impl Agent for ExpertAgent<'_> {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Action, PolicyError> {
        Ok(self.expert.next_action(ctx.state, ctx.target)?)
    }
}

impl Policy for ExpertPolicy {
    fn name(&self) -> &str {
        "expert"
    }

    fn agent<'a>(&'a self, scene: &'a Scene, _task: &TaskSpec, _seed: u64) -> Result<Box<dyn Agent + 'a>, PolicyError> {
        Ok(Box::new(ExpertAgent {
            expert: Expert::new(scene, &self.robot),
        }))
    }
}

/// Memory-augmented policy: backend decision reweighted by retrieved
/// long-term actions, with a bounded short-term memory.
pub struct MemoryPolicy {
    pub backend: Arc<dyn PolicyBackend>,
    pub store: Arc<LongTermStore>,
    pub oracle: EmbeddingOracle,
    pub cot: Arc<dyn CotFeedback>,
    pub capacity: usize,
    pub pooling: PoolingMode,
    pub cot_every: usize,
    /// Sample from the final decision instead of taking the argmax.
    pub sample: bool,
}

impl MemoryPolicy {
    pub fn new(backend: Arc<dyn PolicyBackend>, store: Arc<LongTermStore>, oracle: EmbeddingOracle) -> Self {
        Self {
            backend,
            store,
            oracle,
            cot: Arc::new(RuleCot),
            capacity: crate::memory::DEFAULT_CAPACITY,
            pooling: PoolingMode::default(),
            cot_every: DEFAULT_COT_EVERY,
            sample: false,
        }
    }
}

/// Output of one memory-policy step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDecision {
    pub action: Action,
    pub decision: DecisionVector,
    /// Probability the final decision gives the chosen action.
    pub confidence: f64,
    pub retrieved: usize,
    pub merged: Option<usize>,
}

/// Inputs to [`memory_policy_step`] besides the mutable memory.
pub struct MemoryStepInput<'a> {
    pub instruction: &'a str,
    pub observation: &'a Observation,
    pub target_category: &'a str,
    pub stage: usize,
}

/// One decision of the memory policy. Embeds the observation, queries the
/// backend, reweights with the retrieved actions (when any) and then writes
/// the embedding into short-term memory with the final probability of the
/// chosen action as its confidence.
pub fn memory_policy_step(
    input: &MemoryStepInput<'_>,
    memory: &mut ShortTermMemory,
    store: &LongTermStore,
    backend: &dyn PolicyBackend,
    oracle: &EmbeddingOracle,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<StepDecision, PolicyError> {
    let scene = SceneRepresentation::build(oracle, input.observation);
    let (raw, _) = backend.decide(&BackendInput {
        instruction: input.instruction,
        scene: &scene,
        memory,
        stage: input.stage,
    })?;
    let raw = raw
        .normalized()
        .ok_or_else(|| PolicyError::Config("backend returned an all-zero decision".into()))?;
    let hits = store.retrieve(input.target_category, &scene.fused)?;
    let decision = if hits.is_empty() {
        raw
    } else {
        let acts: Vec<[f64; 4]> = hits.iter().map(|h| h.entry.act).collect();
        weight_decision(&raw, &acts)?.decision
    };
    let action = match rng {
        Some(rng) => sample_action(&decision, rng),
        None => decision.argmax(),
    };
    let confidence = decision.0[action.index()];
    let merged = memory.forget_and_append(scene.fused, confidence.clamp(f64::MIN_POSITIVE, 1.0))?;
    Ok(StepDecision {
        action,
        decision,
        confidence,
        retrieved: hits.len(),
        merged,
    })
}

fn sample_action(d: &DecisionVector, rng: &mut ChaCha8Rng) -> Action {
    let total = d.sum();
    let mut u = rng.random_range(0.0..total);
    for a in Action::ALL {
        let w = d.0[a.index()];
        if u < w {
            return a;
        }
        u -= w;
    }
    d.argmax()
}

struct MemoryAgent<'a> {
    policy: &'a MemoryPolicy,
    memory: ShortTermMemory,
    history: Vec<Observation>,
    subgoals: Vec<String>,
    refined_for: Option<usize>,
    rng: ChaCha8Rng,
}

impl Agent for MemoryAgent<'_> {
    fn act(&mut self, ctx: &StepContext<'_>) -> Result<Action, PolicyError> {
        self.history.push(ctx.observation.clone());
        let every = self.policy.cot_every.max(1);
        if self.refined_for != Some(ctx.subtask) || ctx.step_in_subtask.is_multiple_of(every) {
            self.subgoals = self.policy.cot.refine(&CotContext {
                scene: ctx.scene,
                task: ctx.task,
                subtask: ctx.subtask,
                instruction: &ctx.task.instruction,
                history: &self.history,
            });
            self.refined_for = Some(ctx.subtask);
        }
        let fallback = ctx.scene.object(ctx.target).map_or(ctx.target, |o| o.category.as_str());
        let target = self.subgoals.first().map_or(fallback, String::as_str);
        let out = memory_policy_step(
            &MemoryStepInput {
                instruction: &ctx.task.instruction,
                observation: ctx.observation,
                target_category: target,
                stage: ctx.stage,
            },
            &mut self.memory,
            &self.policy.store,
            self.policy.backend.as_ref(),
            &self.policy.oracle,
            self.policy.sample.then_some(&mut self.rng),
        )?;
        Ok(out.action)
    }
}

impl Policy for MemoryPolicy {
    fn name(&self) -> &str {
        "memory"
    }

    fn agent<'a>(&'a self, _scene: &'a Scene, _task: &TaskSpec, seed: u64) -> Result<Box<dyn Agent + 'a>, PolicyError> {
        Ok(Box::new(MemoryAgent {
            policy: self,
            memory: ShortTermMemory::new(self.oracle.dim(), self.capacity, self.pooling)?,
            history: Vec::new(),
            subgoals: Vec::new(),
            refined_for: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }))
    }
}
