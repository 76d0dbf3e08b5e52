//! Leakage-free corpus splits.
//!
//! Validation and test events are sampled only from the non-overlapping
//! events: events sharing no user with any other event in the corpus.
//! This makes the no-user-overlap guarantee structural rather than a
//! post-hoc filter.

use super::PropagationEvent;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplits {
    pub seed: u64,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("need {needed} non-overlapping events to fill validation and test, corpus has {available}")]
    InsufficientNonOverlap { available: usize, needed: usize },
    #[error("split references unknown event_id {0}")]
    UnknownEvent(String),
}

/// Splits a corpus with ⌊0.1·N⌋ validation and ⌊0.1·N⌋ test events, both
/// seeded uniform samples from the non-overlapping events; everything else
/// trains.
pub fn split_corpus(corpus: &[PropagationEvent], seed: u64) -> Result<CorpusSplits, SplitError> {
    let mut event_count: HashMap<&str, u32> = HashMap::new();
    let user_sets: Vec<HashSet<&str>> = corpus
        .iter()
        .map(|e| e.posts.iter().map(|p| p.user_id.as_str()).collect())
        .collect();
    for users in &user_sets {
        for &u in users {
            *event_count.entry(u).or_insert(0) += 1;
        }
    }

    let mut non_overlapping: Vec<usize> = (0..corpus.len())
        .filter(|&i| user_sets[i].iter().all(|u| event_count[u] == 1))
        .collect();

    let k = corpus.len() / 10;
    let needed = 2 * k;
    if non_overlapping.len() < needed {
        return Err(SplitError::InsufficientNonOverlap {
            available: non_overlapping.len(),
            needed,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    non_overlapping.shuffle(&mut rng);
    let mut validation: Vec<usize> = non_overlapping[..k].to_vec();
    let mut test: Vec<usize> = non_overlapping[k..needed].to_vec();
    validation.sort_unstable();
    test.sort_unstable();

    let held: HashSet<usize> = validation.iter().chain(test.iter()).copied().collect();
    let train: Vec<String> = (0..corpus.len())
        .filter(|i| !held.contains(i))
        .map(|i| corpus[i].event_id.clone())
        .collect();

    Ok(CorpusSplits {
        seed,
        train,
        validation: validation.iter().map(|&i| corpus[i].event_id.clone()).collect(),
        test: test.iter().map(|&i| corpus[i].event_id.clone()).collect(),
    })
}

impl CorpusSplits {
    /// Resolves one split's event ids against a corpus, preserving split
    /// order.
    pub fn select<'a>(
        &self,
        corpus: &'a [PropagationEvent],
        split: &str,
    ) -> Result<Vec<&'a PropagationEvent>, SplitError> {
        let ids = match split {
            "train" => &self.train,
            "validation" => &self.validation,
            "test" => &self.test,
            other => return Err(SplitError::UnknownEvent(other.to_string())),
        };
        let index: HashMap<&str, &PropagationEvent> = corpus
            .iter()
            .map(|e| (e.event_id.as_str(), e))
            .collect();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| SplitError::UnknownEvent(id.clone()))
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, json)
    }

    pub fn load(path: &Path) -> std::io::Result<CorpusSplits> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}
