//! Knowledge repository: every evaluated architecture of a run, with ranking
//! and exemplar sampling over the unique architectures seen so far.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::Fitness;
use crate::rng::SeededRng;
use crate::space::Architecture;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RepoError {
    #[error("cannot sample exemplars from an empty pool")]
    EmptyPool,
    #[error("repository is empty")]
    EmptyRepository,
    #[error("xi must be at least 1")]
    InvalidXi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    SelfEvolution,
    KnowledgeInspiration,
    /// Iterations of the baseline searches.
    Baseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEntry {
    pub arch: Architecture,
    pub fitness: Fitness,
    pub iteration: u32,
    pub phase: Phase,
}

/// Total ranking order: oriented fitness descending, then earlier iteration,
/// then canonical text.
pub fn rank_order(a: &ScoredEntry, b: &ScoredEntry) -> Ordering {
    b.fitness
        .oriented_value
        .total_cmp(&a.fitness.oriented_value)
        .then(a.iteration.cmp(&b.iteration))
        .then_with(|| a.arch.canonical_text().cmp(b.arch.canonical_text()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InsertReceipt {
    pub was_duplicate: bool,
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeRepository {
    records: Vec<ScoredEntry>,
    /// canonical text -> position in `records` of the best entry for that key
    index: HashMap<String, usize>,
}

impl KnowledgeRepository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entry: ScoredEntry) -> InsertReceipt {
        let key = entry.arch.canonical_text().to_string();
        let pos = self.records.len();
        let was_duplicate = match self.index.get(&key) {
            Some(&cur) => {
                let held = &self.records[cur];
                let better = entry.fitness.oriented_value > held.fitness.oriented_value
                    || (entry.fitness.oriented_value == held.fitness.oriented_value
                        && entry.iteration < held.iteration);
                if better {
                    self.index.insert(key, pos);
                }
                true
            }
            None => {
                self.index.insert(key, pos);
                false
            }
        };
        self.records.push(entry);
        InsertReceipt { was_duplicate }
    }

    /// Full history, duplicates included, in insertion order.
    pub fn records(&self) -> &[ScoredEntry] {
        &self.records
    }

    /// Number of distinct architectures.
    pub fn unique_len(&self) -> usize {
        self.index.len()
    }

    pub fn contains(&self, arch: &Architecture) -> bool {
        self.index.contains_key(arch.canonical_text())
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn ranked(&self) -> Vec<&ScoredEntry> {
        let mut all: Vec<&ScoredEntry> = self.index.values().map(|&i| &self.records[i]).collect();
        all.sort_by(|a, b| rank_order(a, b));
        all
    }

    pub fn top_k(&self, k: usize) -> Vec<ScoredEntry> {
        self.ranked().into_iter().take(k).cloned().collect()
    }

    pub fn best(&self) -> Result<ScoredEntry, RepoError> {
        self.index
            .values()
            .map(|&i| &self.records[i])
            .min_by(|a, b| rank_order(a, b))
            .cloned()
            .ok_or(RepoError::EmptyRepository)
    }
}

/// Uniform sample without replacement of `min(xi, top.len())` entries, in
/// draw order (partial Fisher-Yates).
pub fn sample_xi(top: &[ScoredEntry], xi: usize, rng: &mut SeededRng) -> Result<Vec<ScoredEntry>, RepoError> {
    if xi == 0 {
        return Err(RepoError::InvalidXi);
    }
    if top.is_empty() {
        return Err(RepoError::EmptyPool);
    }
    let mut pool: Vec<usize> = (0..top.len()).collect();
    let m = xi.min(top.len());
    for i in 0..m {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    Ok(pool[..m].iter().map(|&i| top[i].clone()).collect())
}
