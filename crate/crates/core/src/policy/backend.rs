use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embedding::SceneRepresentation;
use super::PolicyError;
use crate::memory::{cross_entropy, CeMode, DecisionVector, ShortTermMemory};

/// Width of the navigation-stage one-hot block in the feature vector.
pub const STAGE_SLOTS: usize = 4;
pub const ACTIONS: usize = 4;

/// Everything a backend may look at when choosing an action.
pub struct BackendInput<'a> {
    pub instruction: &'a str,
    pub scene: &'a SceneRepresentation,
    pub memory: &'a ShortTermMemory,
    /// Ordinal of the current navigation stage.
    pub stage: usize,
}

/// Decision maker behind the memory policy. Returns a decision vector and a
/// confidence in (0, 1].
pub trait PolicyBackend: Send + Sync {
    fn decide(&self, input: &BackendInput<'_>) -> Result<(DecisionVector, f64), PolicyError>;
}

/// Always returns the uniform decision.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformBackend;

impl PolicyBackend for UniformBackend {
    fn decide(&self, _input: &BackendInput<'_>) -> Result<(DecisionVector, f64), PolicyError> {
        Ok((DecisionVector::uniform(), 0.25))
    }
}

/// Fused observation, mean short-term memory and a stage one-hot.
pub fn features(input: &BackendInput<'_>) -> Vec<f64> {
    let mut x = input.scene.fused.clone();
    x.extend(input.memory.mean());
    let mut stage = [0.0; STAGE_SLOTS];
    stage[input.stage.min(STAGE_SLOTS - 1)] = 1.0;
    x.extend(stage);
    x
}

pub fn feature_dim(embed_dim: usize) -> usize {
    2 * embed_dim + STAGE_SLOTS
}

/// One training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub target: DecisionVector,
}

/// Softmax over an affine map of the features. Row `a` of the weight matrix
/// holds `in_dim` weights followed by a bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSoftmax {
    in_dim: usize,
    outputs: usize,
    weights: Vec<f64>,
}

impl LinearSoftmax {
    pub fn zeros(in_dim: usize) -> Self {
        Self {
            in_dim,
            outputs: ACTIONS,
            weights: vec![0.0; ACTIONS * (in_dim + 1)],
        }
    }

    pub fn from_weights(in_dim: usize, weights: Vec<f64>) -> Result<Self, PolicyError> {
        if weights.len() != ACTIONS * (in_dim + 1) {
            return Err(PolicyError::Config(format!(
                "expected {} weights for input dimension {in_dim}, got {}",
                ACTIONS * (in_dim + 1),
                weights.len()
            )));
        }
        Ok(Self {
            in_dim,
            outputs: ACTIONS,
            weights,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn check(&self, x: &[f64]) -> Result<(), PolicyError> {
        if x.len() != self.in_dim {
            return Err(PolicyError::Config(format!(
                "feature dimension {} does not match backend input {}",
                x.len(),
                self.in_dim
            )));
        }
        Ok(())
    }

    pub fn probs(&self, x: &[f64]) -> Result<[f64; ACTIONS], PolicyError> {
        self.check(x)?;
        let row = self.in_dim + 1;
        let logits: [f64; ACTIONS] = std::array::from_fn(|a| {
            let w = &self.weights[a * row..(a + 1) * row];
            w[..self.in_dim].iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + w[self.in_dim]
        });
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps = logits.map(|l| (l - max).exp());
        let z: f64 = exps.iter().sum();
        Ok(exps.map(|e| e / z))
    }

    /// Mean imitation cross-entropy over `data`.
    pub fn loss(&self, data: &[Sample]) -> Result<f64, PolicyError> {
        if data.is_empty() {
            return Err(PolicyError::EmptyDataset);
        }
        let mut total = 0.0;
        for s in data {
            let p = DecisionVector(self.probs(&s.x)?);
            total += cross_entropy(&p, &target_of(s)?, CeMode::Imitation);
        }
        Ok(total / data.len() as f64)
    }

    /// Analytic gradient of [`loss`](Self::loss) with respect to the weights.
    pub fn gradient(&self, data: &[Sample]) -> Result<Vec<f64>, PolicyError> {
        if data.is_empty() {
            return Err(PolicyError::EmptyDataset);
        }
        let row = self.in_dim + 1;
        let mut g = vec![0.0; self.weights.len()];
        for s in data {
            let p = self.probs(&s.x)?;
            let e = target_of(s)?;
            for a in 0..ACTIONS {
                let d = p[a] - e.0[a];
                let gr = &mut g[a * row..(a + 1) * row];
                for (gi, xi) in gr.iter_mut().zip(&s.x) {
                    *gi += d * xi;
                }
                gr[self.in_dim] += d;
            }
        }
        let m = data.len() as f64;
        g.iter_mut().for_each(|v| *v /= m);
        Ok(g)
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        let text = serde_json::to_string(self).expect("weights serialization cannot fail");
        std::fs::write(path, text + "\n").map_err(|source| PolicyError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let text = std::fs::read_to_string(path).map_err(|source| PolicyError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let raw: LinearSoftmax = serde_json::from_str(&text).map_err(|e| PolicyError::Config(e.to_string()))?;
        if raw.outputs != ACTIONS {
            return Err(PolicyError::Config(format!("weights file has {} outputs, expected {ACTIONS}", raw.outputs)));
        }
        Self::from_weights(raw.in_dim, raw.weights)
    }
}

fn target_of(s: &Sample) -> Result<DecisionVector, PolicyError> {
    s.target
        .normalized()
        .ok_or_else(|| PolicyError::Config("training target has no mass".into()))
}

impl PolicyBackend for LinearSoftmax {
    fn decide(&self, input: &BackendInput<'_>) -> Result<(DecisionVector, f64), PolicyError> {
        let p = self.probs(&features(input))?;
        let c = p.iter().copied().fold(0.0, f64::max);
        Ok((DecisionVector(p), c))
    }
}

/// Largest step size for which full-batch descent is guaranteed not to
/// increase the loss on `data` (inverse of a curvature bound).
pub fn stable_learning_rate(data: &[Sample]) -> f64 {
    let max_sq = data
        .iter()
        .map(|s| s.x.iter().map(|x| x * x).sum::<f64>() + 1.0)
        .fold(0.0, f64::max);
    if max_sq > 0.0 {
        1.0 / max_sq
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Loss before training followed by the loss after each epoch.
    pub losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("report has the initial loss")
    }
}

/// Full-batch gradient descent on the imitation cross-entropy.
pub fn train_backend(
    backend: &mut LinearSoftmax,
    data: &[Sample],
    epochs: usize,
    learning_rate: f64,
) -> Result<TrainReport, PolicyError> {
    let mut losses = vec![backend.loss(data)?];
    for _ in 0..epochs {
        let g = backend.gradient(data)?;
        for (w, gi) in backend.weights.iter_mut().zip(&g) {
            *w -= learning_rate * gi;
        }
        losses.push(backend.loss(data)?);
    }
    Ok(TrainReport { losses })
}

/// Alternates epochs between `imitation` and `supervised` data, or with
/// `two_stage` runs all supervised epochs first.
pub fn train_alternating(
    backend: &mut LinearSoftmax,
    imitation: &[Sample],
    supervised: &[Sample],
    epochs: usize,
    learning_rate: f64,
    two_stage: bool,
) -> Result<TrainReport, PolicyError> {
    let sets: Vec<&[Sample]> = [supervised, imitation].into_iter().filter(|d| !d.is_empty()).collect();
    if sets.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let all: Vec<Sample> = imitation.iter().chain(supervised).cloned().collect();
    let mut losses = vec![backend.loss(&all)?];
    for epoch in 0..epochs {
        let set = if two_stage {
            sets[(epoch * sets.len() / epochs.max(1)).min(sets.len() - 1)]
        } else {
            sets[epoch % sets.len()]
        };
        train_backend(backend, set, 1, learning_rate)?;
        losses.push(backend.loss(&all)?);
    }
    Ok(TrainReport { losses })
}
