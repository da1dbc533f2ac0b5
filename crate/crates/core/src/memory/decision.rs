use serde::{Deserialize, Serialize};

use super::MemoryError;
use crate::world::Action;

/// Lower clamp applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Nonnegative weights over stop, left, forward, right (index = action).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector(pub [f64; 4]);

impl DecisionVector {
    pub fn new(w: [f64; 4]) -> Result<Self, MemoryError> {
        if w.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
            return Err(MemoryError::BadDecision(format!("{w:?} has a negative or non-finite weight")));
        }
        Ok(Self(w))
    }

    pub fn uniform() -> Self {
        Self([0.25; 4])
    }

    pub fn one_hot(action: Action) -> Self {
        let mut w = [0.0; 4];
        w[action.index()] = 1.0;
        Self(w)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Scaled to sum 1; `None` when all weights are zero.
    pub fn normalized(&self) -> Option<Self> {
        let s = self.sum();
        (s > 0.0).then(|| Self(self.0.map(|x| x / s)))
    }

    /// Highest weight, ties to the lowest index.
    pub fn argmax(&self) -> Action {
        let mut best = 0;
        for i in 1..4 {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        Action::from_index(best).expect("index below 4")
    }
}

/// Result of reweighting; `degenerate` marks an all-zero product, in which
/// case the input decision is returned unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weighted {
    pub decision: DecisionVector,
    pub raw: [f64; 4],
    pub degenerate: bool,
}

/// Multiplies `a` elementwise by the mean retrieved action distribution and
/// renormalizes.
pub fn weight_decision(a: &DecisionVector, acts: &[[f64; 4]]) -> Result<Weighted, MemoryError> {
    if acts.is_empty() {
        return Err(MemoryError::EmptyRetrieval);
    }
    let mut mean = [0.0; 4];
    for act in acts {
        for (m, x) in mean.iter_mut().zip(act) {
            *m += x;
        }
    }
    let n = acts.len() as f64;
    let raw: [f64; 4] = std::array::from_fn(|i| a.0[i] * (mean[i] / n));
    let product = DecisionVector::new(raw)?;
    match product.normalized() {
        Some(decision) => Ok(Weighted {
            decision,
            raw,
            degenerate: false,
        }),
        None => Ok(Weighted {
            decision: *a,
            raw,
            degenerate: true,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CeMode {
    /// Expert distribution as the target: `-sum e_i ln a_i`.
    #[default]
    Imitation,
    /// Prediction and target swapped: `-sum a_i ln e_i`.
    Literal,
}

/// Cross-entropy between a predicted decision `a` and the expert `e`, with
/// probabilities clamped to `[PROB_FLOOR, 1]`.
pub fn cross_entropy(a: &DecisionVector, e: &DecisionVector, mode: CeMode) -> f64 {
    let (target, pred) = match mode {
        CeMode::Imitation => (e, a),
        CeMode::Literal => (a, e),
    };
    let loss: f64 = target
        .0
        .iter()
        .zip(&pred.0)
        .map(|(&t, &p)| -t * p.clamp(PROB_FLOOR, 1.0).ln())
        .sum();
    loss.max(0.0)
}
