//! Conversion of legacy rumor-tree corpora to the canonical record format.
//!
//! The legacy layout is one tree file per event under a directory, each
//! line one edge:
//!
//! ```text
//! ['uid_p', 'post_p', 't_p']->['uid_c', 'post_c', 't_c']
//! ```
//!
//! with `['ROOT', 'ROOT', '0.0']` as the parent of the source post, plus a
//! label file of `class:event_id` lines. Tree files carry no post text, so
//! converted posts have empty text. Non-monotone child timestamps (present
//! in the wild) are clamped up to the parent's time; this never changes
//! post or user counts, only timestamps.

use super::{parse_event, Label, PropagationEvent, RawEventRecord, RawPost};
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LegacyError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("label file line {line} is not 'class:event_id'")]
    BadLabelLine { line: usize },
    #[error("tree {event_id} line {line}: cannot parse edge")]
    BadEdge { event_id: String, line: usize },
    #[error("tree {event_id} has no root edge")]
    NoRoot { event_id: String },
    #[error("tree {event_id} is structurally invalid: {reason}")]
    BadTree { event_id: String, reason: String },
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ConvertSummary {
    pub converted: usize,
    pub skipped: usize,
    pub repaired_timestamps: usize,
}

fn parse_triple(s: &str) -> Option<(String, String, f64)> {
    let inner = s.trim().strip_prefix('[')?.strip_suffix(']')?;
    let parts: Vec<&str> = inner.split(',').collect();
    if parts.len() != 3 {
        return None;
    }
    let unquote = |p: &str| p.trim().trim_matches('\'').trim_matches('"').to_string();
    let uid = unquote(parts[0]);
    let pid = unquote(parts[1]);
    let t: f64 = unquote(parts[2]).parse().ok()?;
    Some((uid, pid, t))
}

fn map_label(raw: &str) -> Label {
    match raw.trim().to_ascii_lowercase().as_str() {
        "non-rumor" | "non_rumor" | "nonrumor" | "news" | "nr" => Label::NonRumor,
        _ => Label::Rumor,
    }
}

/// Converts one tree file's text into a canonical record.
pub fn convert_legacy_tree(
    text: &str,
    event_id: &str,
    label: Label,
) -> Result<(RawEventRecord, usize), LegacyError> {
    struct Node {
        user_id: String,
        ts: f64,
        parent: Option<String>,
    }
    let mut nodes: HashMap<String, Node> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut root: Option<String> = None;

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (parent_part, child_part) = line.split_once("->").ok_or(LegacyError::BadEdge {
            event_id: event_id.to_string(),
            line: lineno + 1,
        })?;
        let parent = parse_triple(parent_part).ok_or(LegacyError::BadEdge {
            event_id: event_id.to_string(),
            line: lineno + 1,
        })?;
        let child = parse_triple(child_part).ok_or(LegacyError::BadEdge {
            event_id: event_id.to_string(),
            line: lineno + 1,
        })?;

        let is_root_edge = parent.0 == "ROOT" || parent.1 == "ROOT";
        let parent_pid = if is_root_edge {
            None
        } else {
            if !nodes.contains_key(&parent.1) {
                nodes.insert(
                    parent.1.clone(),
                    Node {
                        user_id: parent.0.clone(),
                        ts: parent.2,
                        parent: None,
                    },
                );
                order.push(parent.1.clone());
            }
            Some(parent.1.clone())
        };

        if parent_pid.as_deref() == Some(child.1.as_str()) {
            // Self-referential edge; drop it rather than create a cycle.
            continue;
        }
        match nodes.get_mut(&child.1) {
            Some(existing) => {
                // First parent assignment wins; repeated lines are common.
                if existing.parent.is_none() && parent_pid.is_some() && root.as_deref() != Some(child.1.as_str()) {
                    existing.parent = parent_pid.clone();
                }
            }
            None => {
                nodes.insert(
                    child.1.clone(),
                    Node {
                        user_id: child.0.clone(),
                        ts: child.2,
                        parent: parent_pid.clone(),
                    },
                );
                order.push(child.1.clone());
            }
        }
        if is_root_edge {
            root = Some(child.1.clone());
            if let Some(n) = nodes.get_mut(&child.1) {
                n.parent = None;
            }
        }
    }

    let root = root.ok_or(LegacyError::NoRoot {
        event_id: event_id.to_string(),
    })?;
    // Orphans (named as parents only, never as children of anything) hang
    // off the root so the record stays a single tree.
    for pid in &order {
        if *pid != root && nodes[pid].parent.is_none() {
            nodes.get_mut(pid).unwrap().parent = Some(root.clone());
        }
    }

    // Clamp child timestamps up to their parent's; count repairs.
    let mut repaired = 0usize;
    let mut resolved: HashMap<String, f64> = HashMap::new();
    fn resolve(
        pid: &str,
        nodes: &HashMap<String, Node>,
        resolved: &mut HashMap<String, f64>,
        repaired: &mut usize,
        depth: usize,
    ) -> f64 {
        if let Some(&t) = resolved.get(pid) {
            return t;
        }
        let node = &nodes[pid];
        let t = match (&node.parent, depth > nodes.len()) {
            (Some(parent), false) => {
                let pt = resolve(parent, nodes, resolved, repaired, depth + 1);
                if node.ts < pt {
                    *repaired += 1;
                    pt
                } else {
                    node.ts
                }
            }
            _ => node.ts,
        };
        resolved.insert(pid.to_string(), t);
        t
    }
    for pid in &order {
        resolve(pid, &nodes, &mut resolved, &mut repaired, 0);
    }

    let posts: Vec<RawPost> = order
        .iter()
        .map(|pid| {
            let node = &nodes[pid];
            RawPost {
                post_id: pid.clone(),
                parent_id: node.parent.clone(),
                user_id: node.user_id.clone(),
                ts: resolved[pid],
                text: String::new(),
            }
        })
        .collect();

    Ok((
        RawEventRecord {
            event_id: event_id.to_string(),
            label,
            posts,
        },
        repaired,
    ))
}

/// Converts a directory of tree files plus a label file. Trees that fail
/// structural validation are skipped and counted, never silently dropped.
pub fn convert_legacy_dir(
    tree_dir: &Path,
    label_path: &Path,
) -> Result<(Vec<PropagationEvent>, ConvertSummary), LegacyError> {
    let label_text = std::fs::read_to_string(label_path)?;
    let mut labels: Vec<(String, Label)> = Vec::new();
    for (lineno, line) in label_text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (class, event_id) = line
            .split_once(':')
            .ok_or(LegacyError::BadLabelLine { line: lineno + 1 })?;
        labels.push((event_id.trim().to_string(), map_label(class)));
    }

    let mut events = Vec::new();
    let mut summary = ConvertSummary::default();
    for (event_id, label) in labels {
        let path = tree_dir.join(format!("{event_id}.txt"));
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(_) => {
                summary.skipped += 1;
                continue;
            }
        };
        match convert_legacy_tree(&text, &event_id, label) {
            Ok((record, repaired)) => match parse_event(record) {
                Ok(event) => {
                    summary.converted += 1;
                    summary.repaired_timestamps += repaired;
                    events.push(event);
                }
                Err(_) => summary.skipped += 1,
            },
            Err(_) => summary.skipped += 1,
        }
    }
    Ok((events, summary))
}
