//! Observation prefixes: the part of an event visible at prediction time.

use super::PropagationEvent;
use crate::linalg::Mat;

/// A time prefix of an event at a given fraction of its timeline. Holds
/// indices into the parent event's post list; the retained set is
/// prefix-closed under parent links because a parent is never later than
/// its child.
#[derive(Debug, Clone)]
pub struct ObservedEvent<'a> {
    pub event: &'a PropagationEvent,
    pub fraction: f64,
    /// Indices into `event.posts`, chronological.
    pub posts: Vec<usize>,
    /// (child, parent) pairs as positions within `posts`.
    pub parent_edges: Vec<(usize, usize)>,
}

/// Retains exactly the posts with timestamp ≤ fraction·T. The threshold is
/// inclusive so that fraction 1.0 reproduces the full event.
///
/// `fraction` must lie in (0, 1].
pub fn observe_prefix(event: &PropagationEvent, fraction: f64) -> ObservedEvent<'_> {
    assert!(
        fraction > 0.0 && fraction <= 1.0,
        "observation fraction must be in (0,1], got {fraction}"
    );
    let cutoff = fraction * event.t_max;
    let posts: Vec<usize> = (0..event.posts.len())
        .filter(|&i| event.posts[i].ts <= cutoff)
        .collect();

    let mut local: std::collections::HashMap<&str, usize> =
        std::collections::HashMap::with_capacity(posts.len());
    for (li, &gi) in posts.iter().enumerate() {
        local.insert(event.posts[gi].post_id.as_str(), li);
    }
    let mut parent_edges = Vec::new();
    for (li, &gi) in posts.iter().enumerate() {
        if let Some(pid) = &event.posts[gi].parent_id {
            // Parent retained whenever the child is: parent.ts <= child.ts.
            let pj = local[pid.as_str()];
            parent_edges.push((li, pj));
        }
    }
    ObservedEvent {
        event,
        fraction,
        posts,
        parent_edges,
    }
}

impl ObservedEvent<'_> {
    pub fn n_posts(&self) -> usize {
        self.posts.len()
    }

    pub fn post(&self, local: usize) -> &super::Post {
        &self.event.posts[self.posts[local]]
    }

    /// Observation window length f·T; denominator of normalized times.
    pub fn window(&self) -> f64 {
        self.fraction * self.event.t_max
    }

    /// Dense symmetric post adjacency with zero diagonal: (i,j)=1 iff one
    /// of the two posts is the parent of the other.
    pub fn adjacency(&self) -> Mat {
        let n = self.posts.len();
        let mut a = Mat::zeros((n, n));
        for &(c, p) in &self.parent_edges {
            if c != p {
                a[[c, p]] = 1.0;
                a[[p, c]] = 1.0;
            }
        }
        a
    }
}
