//! Adaptive memory: entropy-guided forgetting over a bounded short-term
//! sequence, and a per-target long-term store that reweights decisions.

mod decision;
mod long_term;
mod short_term;

use thiserror::Error;

pub use decision::{cross_entropy, weight_decision, CeMode, DecisionVector, Weighted, PROB_FLOOR};
pub use long_term::{cosine, retrieve_topk, LongTermStore, Retrieved, StoreEntry, DEFAULT_TOP_K};
pub use short_term::{
    entropy, entropy_argmin, pool_candidates, pool_candidates_triple, PoolingMode, ShortTermMemory,
    DEFAULT_CAPACITY,
};

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("pooling needs at least {need} confidences, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("no pooling candidates")]
    NoCandidates,
    #[error("candidate {0} has no positive mass")]
    ZeroCandidate(usize),
    #[error("confidence {0} must lie in (0, 1]")]
    BadConfidence(f64),
    #[error("embedding has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("capacity {capacity} is below the minimum {min} for {mode:?} pooling")]
    Capacity { capacity: usize, min: usize, mode: PoolingMode },
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("invalid decision vector: {0}")]
    BadDecision(String),
    #[error("no retrieved actions to weight with")]
    EmptyRetrieval,
    #[error("store line {line}: {message}")]
    Store { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}
