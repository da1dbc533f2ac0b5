//! Episode orchestration: the step loop, suites over many tasks, trajectory
//! files and run configuration.

mod config;
mod episode;
mod suite;
mod trajectory;
mod training;

use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

pub use config::{PolicyKind, RunConfig, DEFAULT_BUDGET};
pub use episode::{episode_seed, run_episode, Episode};
pub use suite::{run_suite, SuiteOutput, SuiteReport};
pub use trajectory::{SpanOutcome, StepRecord, SubtaskSpan, Trajectory};
pub use training::{collect_expert_data, replay_trajectory, TrainingSet};

use crate::memory::{LongTermStore, MemoryError};
use crate::metrics::MetricsError;
use crate::policy::{
    feature_dim, EmbeddingOracle, ExpertPolicy, LinearSoftmax, MemoryPolicy, Policy, PolicyError, RandomPolicy,
    DEFAULT_SALT,
};
use crate::taskforge::TaskError;
use crate::world::WorldError;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("task {task}: {object:?} is unreachable from the agent")]
    Unreachable { task: String, object: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
}

/// Builds the policy named in `cfg`. The memory policy loads its weights and
/// store from the configured paths, falling back to zero weights and an
/// empty store.
pub fn build_policy(cfg: &RunConfig) -> Result<Box<dyn Policy>, RunError> {
    cfg.validate()?;
    let robot = training::robot_of(cfg)?;
    Ok(match cfg.policy {
        PolicyKind::Expert => Box::new(ExpertPolicy { robot }),
        PolicyKind::Random => Box::new(RandomPolicy),
        PolicyKind::Memory => {
            let oracle = EmbeddingOracle::new(cfg.embed_dim, DEFAULT_SALT)?;
            let backend = match &cfg.weights {
                Some(p) => LinearSoftmax::load(p)?,
                None => LinearSoftmax::zeros(feature_dim(cfg.embed_dim)),
            };
            if backend.in_dim() != feature_dim(cfg.embed_dim) {
                return Err(RunError::Config(format!(
                    "weights expect {} features but embed_dim {} gives {}",
                    backend.in_dim(),
                    cfg.embed_dim,
                    feature_dim(cfg.embed_dim)
                )));
            }
            let store = match &cfg.store {
                Some(p) => LongTermStore::load_jsonl(p, cfg.top_k)?,
                None => LongTermStore::new(cfg.top_k),
            };
            let mut policy = MemoryPolicy::new(Arc::new(backend), Arc::new(store), oracle);
            policy.capacity = cfg.memory_capacity;
            policy.pooling = cfg.pooling();
            policy.cot_every = cfg.cot_every;
            policy.sample = cfg.sample;
            Box::new(policy)
        }
    })
}
