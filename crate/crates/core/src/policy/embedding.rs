use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PolicyError;
use crate::world::{Observation, View, ViewDirection};

pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_SALT: &str = "lhnav";

const VOID_KEY: &str = "\u{0}void";

/// Deterministic bag-of-categories embedding standing in for a visual
/// encoder. Each category owns a fixed two-coordinate unit pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingOracle {
    dim: usize,
    salt: String,
}

impl Default for EmbeddingOracle {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            salt: DEFAULT_SALT.into(),
        }
    }
}

impl EmbeddingOracle {
    pub fn new(dim: usize, salt: impl Into<String>) -> Result<Self, PolicyError> {
        if dim < 2 {
            return Err(PolicyError::Config(format!("embedding dimension {dim} must be at least 2")));
        }
        Ok(Self { dim, salt: salt.into() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The two (coordinate, value) pairs of a category's pattern.
    pub fn coordinates(&self, category: &str) -> [(usize, f64); 2] {
        let mut h = Sha256::new();
        h.update(self.salt.as_bytes());
        h.update([0u8]);
        h.update(category.as_bytes());
        let bytes = h.finalize();
        let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("eight bytes"));
        let a = (word(0) % self.dim as u64) as usize;
        let mut b = (word(8) % (self.dim as u64 - 1)) as usize;
        if b >= a {
            b += 1;
        }
        let v = std::f64::consts::FRAC_1_SQRT_2;
        let sign = |bit: u8| if bytes[16] >> bit & 1 == 1 { -v } else { v };
        [(a, sign(0)), (b, sign(1))]
    }

    /// Unit vector returned for observations with nothing in view.
    pub fn void(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for (i, x) in self.coordinates(VOID_KEY) {
            v[i] = x;
        }
        v
    }

    fn accumulate<'a>(&self, objects: impl Iterator<Item = (&'a str, f64)>) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for (category, range) in objects {
            let scale = 1.0 / (1.0 + range);
            for (i, x) in self.coordinates(category) {
                v[i] += x * scale;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
            v
        } else {
            self.void()
        }
    }

    pub fn embed_view(&self, view: &View) -> Vec<f64> {
        self.accumulate(view.objects.iter().map(|o| (o.category.as_str(), o.range)))
    }

    pub fn embed_observation(&self, obs: &Observation) -> Vec<f64> {
        self.accumulate(obs.visible().map(|o| (o.category.as_str(), o.range)))
    }
}

/// Direction-tagged view embeddings plus the fused whole-observation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRepresentation {
    pub slots: [(ViewDirection, Vec<f64>); 3],
    pub fused: Vec<f64>,
}

impl SceneRepresentation {
    pub fn build(oracle: &EmbeddingOracle, obs: &Observation) -> Self {
        Self {
            slots: ViewDirection::ALL.map(|d| (d, oracle.embed_view(obs.view(d)))),
            fused: oracle.embed_observation(obs),
        }
    }
}

/// Step-indexed history of fused embeddings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    entries: Vec<(usize, Vec<f64>)>,
}

impl History {
    pub fn push(&mut self, step: usize, h: Vec<f64>) -> Result<(), PolicyError> {
        if self.entries.last().is_some_and(|(s, _)| *s >= step) {
            return Err(PolicyError::Config(format!("history step {step} is not increasing")));
        }
        self.entries.push((step, h));
        Ok(())
    }

    pub fn entries(&self) -> &[(usize, Vec<f64>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
