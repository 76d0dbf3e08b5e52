//! Cascade corpora: events, observation prefixes, user graphs, labels,
//! splits, synthetic generation, and corpus statistics.
//!
//! An event is one source post plus the tree of reposts it triggered. The
//! model never sees a full event at prediction time; it sees a time prefix
//! (an [`ObservedEvent`]) and the interaction graph over the users of that
//! prefix. Ground truth, in contrast, is always derived from the full
//! event: virality is the log2 unique-user count of the complete cascade,
//! and a user's vulnerability is the fraction of rumor events among all
//! events the user joined (defined only for users seen in at least two
//! events).

mod labels;
mod legacy;
mod observe;
mod parse;
mod splits;
mod stats;
mod synth;
mod user_graph;

pub use labels::{derive_virality_label, derive_vulnerability_labels, LabelFile, LabelSet};
pub use legacy::{convert_legacy_dir, convert_legacy_tree, ConvertSummary, LegacyError};
pub use observe::{observe_prefix, ObservedEvent};
pub use parse::{
    parse_event, read_events_jsonl, write_events_jsonl, CorpusIoError, ParseError, RawEventRecord,
    RawPost,
};
pub use splits::{split_corpus, CorpusSplits, SplitError};
pub use stats::{corpus_stats, ClassStats, StatsTable};
pub use synth::{generate_synthetic_corpus, SynthConfig, SynthError};
pub use user_graph::{build_user_graph, UserInteractionGraph};

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Event class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "rumor")]
    Rumor,
    #[serde(rename = "non_rumor")]
    NonRumor,
}

impl Label {
    /// Class index used everywhere logits appear: order is
    /// `[non_rumor, rumor]`.
    pub fn index(self) -> usize {
        match self {
            Label::NonRumor => 0,
            Label::Rumor => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::NonRumor
        } else {
            Label::Rumor
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Rumor => "rumor",
            Label::NonRumor => "non_rumor",
        }
    }
}

/// One post in a cascade. Timestamps are seconds since the source post
/// (the source itself sits at 0 after parsing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub parent_id: Option<String>,
    pub user_id: String,
    pub ts: f64,
    pub text: String,
}

/// A full propagation event: the source post and every repost, sorted
/// chronologically (ties broken by post_id), with parent links forming a
/// single tree rooted at the source.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationEvent {
    pub event_id: String,
    pub label: Label,
    pub posts: Vec<Post>,
    /// Timestamp of the last post; the event horizon used by observation
    /// windows.
    pub t_max: f64,
}

impl PropagationEvent {
    pub fn source(&self) -> &Post {
        &self.posts[0]
    }

    /// Count of distinct users over ALL posts of the full event.
    pub fn unique_user_count(&self) -> usize {
        let users: HashSet<&str> = self.posts.iter().map(|p| p.user_id.as_str()).collect();
        users.len()
    }

    /// The serializable on-disk form; `t_max` is derived, not stored.
    pub fn to_record(&self) -> RawEventRecord {
        RawEventRecord {
            event_id: self.event_id.clone(),
            label: self.label,
            posts: self
                .posts
                .iter()
                .map(|p| RawPost {
                    post_id: p.post_id.clone(),
                    parent_id: p.parent_id.clone(),
                    user_id: p.user_id.clone(),
                    ts: p.ts,
                    text: p.text.clone(),
                })
                .collect(),
        }
    }
}
