//! Per-event precomputation.
//!
//! The text encoder and the pretrained user table are frozen, so for a
//! fixed observation fraction everything upstream of the time projection
//! is a constant of the event. Preparing events once turns the hot
//! training path into pure tensor work.

use crate::data::{build_user_graph, observe_prefix, Label, LabelSet, PropagationEvent, UserInteractionGraph};
use crate::encoder::{encode_contents, normalized_times, TextEncoder};
use crate::linalg::{Mat, Vec1};
use crate::pretrain::UserEmbeddingTable;

#[derive(Debug, Clone)]
pub struct PreparedEvent {
    pub event_id: String,
    pub class: Label,
    pub fraction: f64,
    /// |V|×d frozen content rows of the observed posts.
    pub content: Mat,
    /// |V| normalized timestamps.
    pub tau: Vec1,
    pub graph: UserInteractionGraph,
    /// |U|×d pretrained user vectors in graph node order.
    pub x_u0: Mat,
    /// log₂ unique users of the full event.
    pub virality_target: f64,
    /// (node index, score) for users carrying a vulnerability label.
    pub vuln_labels: Vec<(usize, f64)>,
}

impl PreparedEvent {
    pub fn n_users(&self) -> usize {
        self.graph.n_users()
    }
}

pub fn prepare_event(
    event: &PropagationEvent,
    fraction: f64,
    encoder: &dyn TextEncoder,
    user_table: &UserEmbeddingTable,
    labels: &LabelSet,
) -> PreparedEvent {
    let observed = observe_prefix(event, fraction);
    let graph = build_user_graph(&observed);
    let content = encode_contents(&observed, encoder);
    let tau = normalized_times(&observed);

    let n = graph.n_users();
    let mut x_u0 = Mat::zeros((n, user_table.dim));
    for (i, uid) in graph.users.iter().enumerate() {
        x_u0.row_mut(i).assign(user_table.lookup(uid));
    }

    let virality_target = labels
        .virality
        .get(&event.event_id)
        .copied()
        .unwrap_or_else(|| crate::data::derive_virality_label(event));
    let vuln_labels = graph
        .users
        .iter()
        .enumerate()
        .filter_map(|(i, uid)| labels.vulnerability.get(uid).map(|&s| (i, s)))
        .collect();

    PreparedEvent {
        event_id: event.event_id.clone(),
        class: event.label,
        fraction,
        content,
        tau,
        graph,
        x_u0,
        virality_target,
        vuln_labels,
    }
}
