//! Independent oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use rand::Rng;

use seki::evaluator::{Direction, Fitness};
use seki::repository::{Phase, ScoredEntry};
use seki::rng::SeededRng;
use seki::space::{describe_space, random_architecture, SpaceId};

/// Ranking by full sort: keep, per architecture, the entry with the highest
/// fitness (earliest iteration on ties, first inserted after that), then sort
/// by fitness descending, iteration ascending, text ascending.
pub fn brute_force_ranking(entries: &[ScoredEntry]) -> Vec<ScoredEntry> {
    let mut kept: Vec<ScoredEntry> = Vec::new();
    for e in entries {
        match kept
            .iter_mut()
            .find(|k| k.arch.canonical_text() == e.arch.canonical_text())
        {
            None => kept.push(e.clone()),
            Some(k) => {
                let (a, b) = (e.fitness.oriented_value, k.fitness.oriented_value);
                if a > b || (a == b && e.iteration < k.iteration) {
                    *k = e.clone();
                }
            }
        }
    }
    kept.sort_by(|a, b| {
        b.fitness
            .oriented_value
            .partial_cmp(&a.fitness.oriented_value)
            .unwrap()
            .then(a.iteration.cmp(&b.iteration))
            .then(a.arch.canonical_text().cmp(b.arch.canonical_text()))
    });
    kept
}

/// `size` entries over a small pool of architectures and coarse fitness
/// values, so duplicates and ties are common.
pub fn random_entries(rng: &mut SeededRng, size: usize) -> Vec<ScoredEntry> {
    let space = describe_space(SpaceId::Nas201);
    let pool_size = rng.gen_range(1..=size.max(1));
    let pool: Vec<_> = (0..pool_size).map(|_| random_architecture(space, rng)).collect();
    let direction = if rng.gen_bool(0.5) {
        Direction::Maximize
    } else {
        Direction::Minimize
    };
    (0..size)
        .map(|_| ScoredEntry {
            arch: pool[rng.gen_range(0..pool.len())].clone(),
            fitness: Fitness::new(rng.gen_range(0..8) as f64 * 0.5, "m", direction),
            iteration: rng.gen_range(0..(size as u32 / 2 + 1)),
            phase: Phase::SelfEvolution,
        })
        .collect()
}
