use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MemoryError;

pub const DEFAULT_TOP_K: usize = 5;

/// One stored observation-action pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub obs: Vec<f64>,
    /// Action distribution over stop, left, forward, right.
    pub act: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoreLine {
    target: String,
    obs: Vec<f64>,
    act: [f64; 4],
}

/// A retrieved pair with its cosine similarity to the query.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved<'a> {
    pub index: usize,
    pub similarity: f64,
    pub entry: &'a StoreEntry,
}

/// Per-target buckets of observation-action pairs. Read-only once built.
#[derive(Debug, Clone, PartialEq)]
pub struct LongTermStore {
    k: usize,
    buckets: BTreeMap<String, Vec<StoreEntry>>,
}

impl Default for LongTermStore {
    fn default() -> Self {
        Self::new(DEFAULT_TOP_K)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn check_entry(entry: &StoreEntry) -> Result<(), String> {
    if entry.obs.iter().any(|x| !x.is_finite()) {
        return Err("observation vector is not finite".into());
    }
    if entry.obs.iter().all(|&x| x == 0.0) {
        return Err("observation vector is zero".into());
    }
    if entry.act.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
        return Err("action distribution has a negative entry".into());
    }
    let total: f64 = entry.act.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(format!("action distribution sums to {total}"));
    }
    Ok(())
}

impl LongTermStore {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            buckets: BTreeMap::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn insert(&mut self, target: &str, entry: StoreEntry) -> Result<(), MemoryError> {
        check_entry(&entry).map_err(|message| MemoryError::Store { line: 0, message })?;
        self.buckets.entry(target.to_string()).or_default().push(entry);
        Ok(())
    }

    pub fn bucket(&self, target: &str) -> &[StoreEntry] {
        self.buckets.get(target).map_or(&[], Vec::as_slice)
    }

    pub fn targets(&self) -> impl Iterator<Item = &str> {
        self.buckets.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn retrieve(&self, target: &str, v: &[f64]) -> Result<Vec<Retrieved<'_>>, MemoryError> {
        retrieve_topk(self.bucket(target), v, self.k)
    }

    /// Writes one JSON record per line, targets in sorted order and entries
    /// in insertion order.
    pub fn save_jsonl(&self, path: &Path) -> Result<(), MemoryError> {
        let io = |source| MemoryError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        for (target, entries) in &self.buckets {
            for e in entries {
                let line = StoreLine {
                    target: target.clone(),
                    obs: e.obs.clone(),
                    act: e.act,
                };
                let text = serde_json::to_string(&line).expect("store line serialization cannot fail");
                writeln!(out, "{text}").map_err(io)?;
            }
        }
        out.flush().map_err(io)
    }

    /// Loads a store; file order defines insertion order within a bucket.
    pub fn load_jsonl(path: &Path, k: usize) -> Result<Self, MemoryError> {
        let io = |source| MemoryError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = std::fs::File::open(path).map_err(io)?;
        let mut store = Self::new(k);
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: StoreLine = serde_json::from_str(&line).map_err(|e| MemoryError::Store {
                line: n + 1,
                message: e.to_string(),
            })?;
            let entry = StoreEntry {
                obs: rec.obs,
                act: rec.act,
            };
            check_entry(&entry).map_err(|message| MemoryError::Store { line: n + 1, message })?;
            store.buckets.entry(rec.target).or_default().push(entry);
        }
        Ok(store)
    }
}

/// Top `min(k, m)` entries by descending cosine similarity to `v`; equal
/// similarities keep insertion order.
pub fn retrieve_topk<'a>(bucket: &'a [StoreEntry], v: &[f64], k: usize) -> Result<Vec<Retrieved<'a>>, MemoryError> {
    if v.iter().all(|&x| x == 0.0) {
        return Err(MemoryError::ZeroNorm);
    }
    let mut scored: Vec<(usize, f64)> = bucket.iter().enumerate().map(|(i, e)| (i, cosine(&e.obs, v))).collect();
    let order = |a: &(usize, f64), b: &(usize, f64)| -> Ordering { b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)) };
    let take = k.min(scored.len());
    if take == 0 {
        return Ok(Vec::new());
    }
    if take < scored.len() {
        scored.select_nth_unstable_by(take - 1, order);
        scored.truncate(take);
    }
    scored.sort_by(order);
    Ok(scored
        .into_iter()
        .map(|(index, similarity)| Retrieved {
            index,
            similarity,
            entry: &bucket[index],
        })
        .collect())
}
