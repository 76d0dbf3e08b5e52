//! Ingestion of the canonical event record format: one JSON object per
//! line, one line per event.

use super::{Label, Post, PropagationEvent};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawPost {
    pub post_id: String,
    #[serde(default)]
    pub parent_id: Option<String>,
    pub user_id: String,
    pub ts: f64,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawEventRecord {
    pub event_id: String,
    pub label: Label,
    pub posts: Vec<RawPost>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("event {event_id} has no posts")]
    EmptyEvent { event_id: String },
    #[error("event {event_id}: expected exactly one source post, found {found}")]
    MissingSource { event_id: String, found: usize },
    #[error("event {event_id}: post {child} references missing parent {parent}")]
    DanglingParent {
        event_id: String,
        child: String,
        parent: String,
    },
    #[error("event {event_id}: parent links are not a tree rooted at the source (post {post} unreachable)")]
    CycleDetected { event_id: String, post: String },
    #[error("event {event_id}: post {child} is earlier than its parent {parent}")]
    NonMonotoneChild {
        event_id: String,
        child: String,
        parent: String,
    },
    #[error("event {event_id}: duplicate post_id {post_id}")]
    DuplicatePostId { event_id: String, post_id: String },
    #[error("event {event_id}: non-finite timestamp on post {post_id}")]
    NonFiniteTimestamp { event_id: String, post_id: String },
}

/// Validates a raw record and produces a [`PropagationEvent`]: timestamps
/// are rebased so the source post sits at 0, posts are sorted by
/// (timestamp, post_id), and the parent links are checked to form a single
/// tree with non-decreasing timestamps along every edge.
pub fn parse_event(record: RawEventRecord) -> Result<PropagationEvent, ParseError> {
    let event_id = record.event_id;
    if record.posts.is_empty() {
        return Err(ParseError::EmptyEvent { event_id });
    }
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(record.posts.len());
    for (i, p) in record.posts.iter().enumerate() {
        if !p.ts.is_finite() {
            return Err(ParseError::NonFiniteTimestamp {
                event_id,
                post_id: p.post_id.clone(),
            });
        }
        if index.insert(p.post_id.as_str(), i).is_some() {
            return Err(ParseError::DuplicatePostId {
                event_id,
                post_id: p.post_id.clone(),
            });
        }
    }

    let sources: Vec<usize> = record
        .posts
        .iter()
        .enumerate()
        .filter(|(_, p)| p.parent_id.is_none())
        .map(|(i, _)| i)
        .collect();
    if sources.len() != 1 {
        return Err(ParseError::MissingSource {
            event_id,
            found: sources.len(),
        });
    }
    let source = sources[0];

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); record.posts.len()];
    for (i, p) in record.posts.iter().enumerate() {
        if let Some(parent_id) = &p.parent_id {
            let &j = index
                .get(parent_id.as_str())
                .ok_or_else(|| ParseError::DanglingParent {
                    event_id: event_id.clone(),
                    child: p.post_id.clone(),
                    parent: parent_id.clone(),
                })?;
            if p.ts < record.posts[j].ts {
                return Err(ParseError::NonMonotoneChild {
                    event_id,
                    child: p.post_id.clone(),
                    parent: parent_id.clone(),
                });
            }
            children[j].push(i);
        }
    }

    // Every non-source post has a parent, so any post unreachable from the
    // source lies on (or hangs off) a parent cycle.
    let mut seen = vec![false; record.posts.len()];
    let mut stack = vec![source];
    seen[source] = true;
    while let Some(i) = stack.pop() {
        for &c in &children[i] {
            if !seen[c] {
                seen[c] = true;
                stack.push(c);
            }
        }
    }
    if let Some(unreached) = seen.iter().position(|&s| !s) {
        return Err(ParseError::CycleDetected {
            event_id,
            post: record.posts[unreached].post_id.clone(),
        });
    }

    let t0 = record.posts[source].ts;
    let mut posts: Vec<Post> = record
        .posts
        .into_iter()
        .map(|p| Post {
            post_id: p.post_id,
            parent_id: p.parent_id,
            user_id: p.user_id,
            ts: p.ts - t0,
            text: p.text,
        })
        .collect();
    posts.sort_by(|a, b| {
        a.ts.partial_cmp(&b.ts)
            .unwrap()
            .then_with(|| a.post_id.cmp(&b.post_id))
    });
    let t_max = posts.last().unwrap().ts;

    Ok(PropagationEvent {
        event_id,
        label: record.label,
        posts,
        t_max,
    })
}

#[derive(Debug, Error)]
pub enum CorpusIoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Schema {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {source}")]
    Event {
        line: usize,
        #[source]
        source: ParseError,
    },
    #[error("duplicate event_id {0}")]
    DuplicateEvent(String),
}

/// Reads a JSONL corpus, validating every record.
pub fn read_events_jsonl(path: &Path) -> Result<Vec<PropagationEvent>, CorpusIoError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut events = Vec::new();
    let mut ids = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawEventRecord = serde_json::from_str(&line).map_err(|e| {
            CorpusIoError::Schema {
                line: lineno + 1,
                source: e,
            }
        })?;
        let event = parse_event(record).map_err(|e| CorpusIoError::Event {
            line: lineno + 1,
            source: e,
        })?;
        if !ids.insert(event.event_id.clone()) {
            return Err(CorpusIoError::DuplicateEvent(event.event_id));
        }
        events.push(event);
    }
    Ok(events)
}

/// Writes the corpus as one JSON record per line. Field order is fixed by
/// the record structs, so the output is byte-deterministic.
pub fn write_events_jsonl(path: &Path, events: &[PropagationEvent]) -> Result<(), CorpusIoError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for event in events {
        let record = event.to_record();
        serde_json::to_writer(&mut w, &record).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
