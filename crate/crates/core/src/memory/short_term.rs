use serde::{Deserialize, Serialize};

use super::MemoryError;

pub const DEFAULT_CAPACITY: usize = 32;

/// How adjacent confidences are pooled when the memory is full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    /// Merge entries `i` and `i+1`; candidates have length `n-1`.
    #[default]
    Pair,
    /// Merge entries `i-1`, `i`, `i+1`; candidates have length `n-2`.
    Triple,
}

impl PoolingMode {
    fn width(self) -> usize {
        match self {
            PoolingMode::Pair => 2,
            PoolingMode::Triple => 3,
        }
    }
}

/// Candidate `i` replaces `(c_i, c_{i+1})` with their mean.
pub fn pool_candidates(c: &[f64]) -> Result<Vec<Vec<f64>>, MemoryError> {
    pool_width(c, 2)
}

/// Candidate `i` replaces `(c_i, c_{i+1}, c_{i+2})` with their mean.
pub fn pool_candidates_triple(c: &[f64]) -> Result<Vec<Vec<f64>>, MemoryError> {
    pool_width(c, 3)
}

fn pool_width(c: &[f64], w: usize) -> Result<Vec<Vec<f64>>, MemoryError> {
    if c.len() < w {
        return Err(MemoryError::TooShort { need: w, got: c.len() });
    }
    Ok((0..=c.len() - w)
        .map(|i| {
            let mean = c[i..i + w].iter().sum::<f64>() / w as f64;
            let mut v = Vec::with_capacity(c.len() - w + 1);
            v.extend_from_slice(&c[..i]);
            v.push(mean);
            v.extend_from_slice(&c[i + w..]);
            v
        })
        .collect())
}

/// Shannon entropy (nats) of `v` normalized to a distribution.
///
/// Terms are summed in ascending order so that permutations of the same
/// values give bit-identical results.
pub fn entropy(v: &[f64]) -> Option<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut terms: Vec<f64> = sorted
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| {
            let s = x / total;
            -s * s.ln()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    Some(terms.iter().sum())
}

/// Index of the candidate with the lowest entropy; ties go to the smallest index.
pub fn entropy_argmin(candidates: &[Vec<f64>]) -> Result<usize, MemoryError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, cand) in candidates.iter().enumerate() {
        let h = entropy(cand).ok_or(MemoryError::ZeroCandidate(i))?;
        if best.is_none_or(|(_, bh)| h < bh) {
            best = Some((i, h));
        }
    }
    best.map(|(i, _)| i).ok_or(MemoryError::NoCandidates)
}

/// Bounded sequence of embeddings with per-entry confidences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortTermMemory {
    dim: usize,
    capacity: usize,
    mode: PoolingMode,
    entries: Vec<Vec<f64>>,
    confidences: Vec<f64>,
}

impl ShortTermMemory {
    pub fn new(dim: usize, capacity: usize, mode: PoolingMode) -> Result<Self, MemoryError> {
        if capacity < mode.width() {
            return Err(MemoryError::Capacity {
                capacity,
                min: mode.width(),
                mode,
            });
        }
        Ok(Self {
            dim,
            capacity,
            mode,
            entries: Vec::new(),
            confidences: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn mode(&self) -> PoolingMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn confidences(&self) -> &[f64] {
        &self.confidences
    }

    /// Elementwise mean of the stored embeddings (zeros when empty).
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        if self.entries.is_empty() {
            return m;
        }
        for e in &self.entries {
            for (a, b) in m.iter_mut().zip(e) {
                *a += b;
            }
        }
        let n = self.entries.len() as f64;
        m.iter_mut().for_each(|x| *x /= n);
        m
    }

    /// Appends `(h, c)`, first merging the lowest-entropy window when full.
    /// Returns the merged position, if a merge happened.
    pub fn forget_and_append(&mut self, h: Vec<f64>, c: f64) -> Result<Option<usize>, MemoryError> {
        if h.len() != self.dim {
            return Err(MemoryError::Dimension {
                expected: self.dim,
                got: h.len(),
            });
        }
        if !(c > 0.0 && c <= 1.0) {
            return Err(MemoryError::BadConfidence(c));
        }
        let mut merged = None;
        if self.entries.len() >= self.capacity {
            let w = self.mode.width();
            let candidates = match self.mode {
                PoolingMode::Pair => pool_candidates(&self.confidences)?,
                PoolingMode::Triple => pool_candidates_triple(&self.confidences)?,
            };
            let i = entropy_argmin(&candidates)?;
            self.confidences = candidates.into_iter().nth(i).expect("argmin is in range");
            let group: Vec<Vec<f64>> = self.entries.drain(i..i + w).collect();
            let mut mean = vec![0.0; self.dim];
            for e in &group {
                for (a, b) in mean.iter_mut().zip(e) {
                    *a += b;
                }
            }
            mean.iter_mut().for_each(|x| *x /= w as f64);
            self.entries.insert(i, mean);
            merged = Some(i);
        }
        self.entries.push(h);
        self.confidences.push(c);
        Ok(merged)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_candidates() {
        assert_eq!(pool_candidates(&[0.2, 0.4]).unwrap(), vec![vec![0.30000000000000004]]);
        let c = pool_candidates(&[0.9, 0.9, 0.1, 0.9]).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c[0], vec![0.9, 0.1, 0.9]);
        assert!(c.iter().all(|v| v.len() == 3));
        assert!(pool_candidates(&[0.5]).is_err());
    }

    #[test]
    fn triple_candidates() {
        let c = pool_candidates_triple(&[0.3, 0.6, 0.9, 0.3]).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|v| v.len() == 2));
        assert!((c[0][0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn entropy_fixture() {
        let c = pool_candidates(&[0.9, 0.9, 0.1, 0.9]).unwrap();
        let h: Vec<f64> = c.iter().map(|v| entropy(v).unwrap()).collect();
        assert!((h[0] - 0.8630).abs() < 1e-3, "{h:?}");
        assert!((h[1] - 1.0659).abs() < 1e-3, "{h:?}");
        assert!((h[2] - 1.0659).abs() < 1e-3, "{h:?}");
        assert_eq!(entropy_argmin(&c).unwrap(), 0);
    }

    #[test]
    fn uniform_ties_pick_first() {
        let c = pool_candidates(&[0.2; 4]).unwrap();
        assert_eq!(entropy_argmin(&c).unwrap(), 0);
        assert_eq!(entropy_argmin(&[vec![1.0]]).unwrap(), 0);
        assert!(matches!(entropy_argmin(&[vec![0.0, 0.0]]), Err(MemoryError::ZeroCandidate(0))));
    }

    #[test]
    fn forgetting_keeps_distinct_memory() {
        let mut m = ShortTermMemory::new(1, 4, PoolingMode::Pair).unwrap();
        for (i, c) in [0.9, 0.9, 0.1, 0.9].into_iter().enumerate() {
            m.forget_and_append(vec![i as f64], c).unwrap();
        }
        let merged = m.forget_and_append(vec![4.0], 0.5).unwrap();
        assert_eq!(merged, Some(0));
        assert_eq!(m.len(), 4);
        assert_eq!(m.entries(), &[vec![0.5], vec![2.0], vec![3.0], vec![4.0]]);
        assert_eq!(m.confidences(), &[0.9, 0.1, 0.9, 0.5]);
    }

    #[test]
    fn below_capacity_appends() {
        let mut m = ShortTermMemory::new(2, 3, PoolingMode::Pair).unwrap();
        m.forget_and_append(vec![1.0, 0.0], 0.4).unwrap();
        m.forget_and_append(vec![0.0, 1.0], 0.6).unwrap();
        assert_eq!(m.entries(), &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(m.mean(), vec![0.5, 0.5]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ShortTermMemory::new(2, 1, PoolingMode::Pair).is_err());
        assert!(ShortTermMemory::new(2, 2, PoolingMode::Triple).is_err());
        let mut m = ShortTermMemory::new(2, 3, PoolingMode::Pair).unwrap();
        assert!(m.forget_and_append(vec![1.0], 0.5).is_err());
        assert!(m.forget_and_append(vec![1.0, 0.0], 0.0).is_err());
        assert!(m.forget_and_append(vec![1.0, 0.0], 1.5).is_err());
    }

    #[test]
    fn triple_mode_stays_bounded() {
        let mut m = ShortTermMemory::new(1, 5, PoolingMode::Triple).unwrap();
        for i in 0..100 {
            m.forget_and_append(vec![i as f64], 0.1 + (i % 9) as f64 / 10.0).unwrap();
            assert!(m.len() <= 5);
            assert_eq!(m.len(), m.confidences().len());
        }
    }
}
