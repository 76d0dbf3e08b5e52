//! Per-event user interaction graphs.

use super::ObservedEvent;
use crate::linalg::Mat;
use std::collections::HashMap;

/// Unique users of an observed event with an edge wherever a repost links
/// two distinct users' posts. The undirected adjacency is what the encoder
/// consumes by default; the directed edge list (parent author → child
/// author) supports the directional aggregation modes.
#[derive(Debug, Clone)]
pub struct UserInteractionGraph {
    /// First-appearance order over the observed posts.
    pub users: Vec<String>,
    /// |U|×|U|, symmetric 0/1, zero diagonal.
    pub adjacency: Mat,
    /// Deduplicated (parent_author, child_author) index pairs, self pairs
    /// dropped.
    pub directed_edges: Vec<(usize, usize)>,
}

impl UserInteractionGraph {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }
}

/// Builds the interaction graph for an observed event. Users are indexed in
/// first-appearance (chronological) order; repost edges between posts of
/// the same user are dropped.
pub fn build_user_graph(observed: &ObservedEvent<'_>) -> UserInteractionGraph {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut users: Vec<String> = Vec::new();
    for li in 0..observed.n_posts() {
        let uid = observed.post(li).user_id.as_str();
        if !index.contains_key(uid) {
            index.insert(uid, users.len());
            users.push(uid.to_string());
        }
    }

    let n = users.len();
    let mut adjacency = Mat::zeros((n, n));
    let mut directed: Vec<(usize, usize)> = Vec::new();
    for &(child, parent) in &observed.parent_edges {
        let a = index[observed.post(child).user_id.as_str()];
        let b = index[observed.post(parent).user_id.as_str()];
        if a == b {
            continue;
        }
        adjacency[[a, b]] = 1.0;
        adjacency[[b, a]] = 1.0;
        directed.push((b, a));
    }
    directed.sort_unstable();
    directed.dedup();

    UserInteractionGraph {
        users,
        adjacency,
        directed_edges: directed,
    }
}
