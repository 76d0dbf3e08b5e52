//! Ground-truth label derivation. Labels always come from FULL events,
//! never from observation prefixes.

use super::{Label, PropagationEvent};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::path::Path;

/// Derived labels for one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub class: BTreeMap<String, Label>,
    /// event_id → log2 of the full event's unique-user count.
    pub virality: BTreeMap<String, f64>,
    /// user_id → rumor fraction; present only for users in ≥ 2 events.
    pub vulnerability: BTreeMap<String, f64>,
}

/// On-disk form of the derived labels (class lives in the events file).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelFile {
    pub virality: BTreeMap<String, f64>,
    pub vulnerability: BTreeMap<String, f64>,
}

/// log2 of the count of unique users over ALL posts of the full event.
pub fn derive_virality_label(event: &PropagationEvent) -> f64 {
    (event.unique_user_count() as f64).log2()
}

/// For each user appearing in ≥ 2 distinct events: the fraction of those
/// events labeled rumor. Users in exactly one event are absent.
pub fn derive_vulnerability_labels(corpus: &[PropagationEvent]) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<&str, (u32, u32)> = BTreeMap::new();
    for event in corpus {
        let users: HashSet<&str> = event.posts.iter().map(|p| p.user_id.as_str()).collect();
        for user in users {
            let entry = counts.entry(user).or_insert((0, 0));
            entry.0 += 1;
            if event.label == Label::Rumor {
                entry.1 += 1;
            }
        }
    }
    counts
        .into_iter()
        .filter(|(_, (n, _))| *n >= 2)
        .map(|(user, (n, k))| (user.to_string(), k as f64 / n as f64))
        .collect()
}

impl LabelSet {
    pub fn derive(corpus: &[PropagationEvent]) -> LabelSet {
        let mut class = BTreeMap::new();
        let mut virality = BTreeMap::new();
        for event in corpus {
            class.insert(event.event_id.clone(), event.label);
            virality.insert(event.event_id.clone(), derive_virality_label(event));
        }
        LabelSet {
            class,
            virality,
            vulnerability: derive_vulnerability_labels(corpus),
        }
    }

    /// Reassembles a full label set from the on-disk part plus the events
    /// it was derived from.
    pub fn from_file(file: LabelFile, corpus: &[PropagationEvent]) -> LabelSet {
        let class = corpus
            .iter()
            .map(|e| (e.event_id.clone(), e.label))
            .collect();
        LabelSet {
            class,
            virality: file.virality,
            vulnerability: file.vulnerability,
        }
    }

    pub fn to_file(&self) -> LabelFile {
        LabelFile {
            virality: self.virality.clone(),
            vulnerability: self.vulnerability.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(&self.to_file()).map_err(std::io::Error::other)?;
        std::fs::write(path, json)
    }

    pub fn load(path: &Path, corpus: &[PropagationEvent]) -> std::io::Result<LabelSet> {
        let text = std::fs::read_to_string(path)?;
        let file: LabelFile = serde_json::from_str(&text).map_err(std::io::Error::other)?;
        Ok(LabelSet::from_file(file, corpus))
    }
}
