//! CSV export of model artifacts for downstream tooling.
//!
//! Three artifact kinds, each written to any [`Write`] sink with a header
//! row even when the split is empty:
//!
//! * communities: per (user, event), the argmax community of the soft
//!   assignment matrix and its weight,
//! * embeddings: per (user, event), the refined node representation row
//!   that feeds the vulnerability head,
//! * predictions: per (user, event), event-level rumor probability and
//!   predicted virality alongside the user's vulnerability score.
//!
//! Floats use `Display`, which round-trips f64 exactly through parsing.
//! Rows are grouped by event in input order, users in graph node order.

use crate::encoder::DirectionMode;
use crate::model::{forward, forward_backbone, ModelParams, PreparedEvent};
use crate::par::ordered_map;
use std::io::{self, Write};

/// Comma-joins without allocating per float.
fn write_row(out: &mut impl Write, fields: &[&dyn std::fmt::Display]) -> io::Result<()> {
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            out.write_all(b",")?;
        }
        write!(out, "{f}")?;
    }
    out.write_all(b"\n")
}

pub fn export_communities(
    out: &mut impl Write,
    params: &ModelParams,
    mode: DirectionMode,
    prepared: &[PreparedEvent],
) -> io::Result<()> {
    out.write_all(b"user_id,event_id,community,weight\n")?;
    let per_event = ordered_map(prepared, None, |prep| {
        let bb = forward_backbone(prep, params, mode, None);
        bb.pooled.c
    });
    for (prep, c) in prepared.iter().zip(&per_event) {
        for (u, user) in prep.graph.users.iter().enumerate() {
            let row = c.row(u);
            let (best, weight) = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap();
            write_row(out, &[user, &prep.event_id, &best, weight])?;
        }
    }
    Ok(())
}

pub fn export_embeddings(
    out: &mut impl Write,
    params: &ModelParams,
    mode: DirectionMode,
    prepared: &[PreparedEvent],
    dim: usize,
) -> io::Result<()> {
    out.write_all(b"user_id,event_id")?;
    for j in 0..dim {
        write!(out, ",e{j}")?;
    }
    out.write_all(b"\n")?;
    let per_event = ordered_map(prepared, None, |prep| {
        let (_, cache) = forward(prep, params, mode, None);
        cache.heads.x_u4
    });
    for (prep, x_u4) in prepared.iter().zip(&per_event) {
        for (u, user) in prep.graph.users.iter().enumerate() {
            write!(out, "{user},{}", prep.event_id)?;
            for x in x_u4.row(u) {
                write!(out, ",{x}")?;
            }
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn export_predictions(
    out: &mut impl Write,
    params: &ModelParams,
    mode: DirectionMode,
    prepared: &[PreparedEvent],
) -> io::Result<()> {
    out.write_all(b"event_id,user_id,rumor_prob,virality,vulnerability\n")?;
    let per_event = ordered_map(prepared, None, |prep| {
        let (preds, _) = forward(prep, params, mode, None);
        (preds.rumor_prob(), preds.virality, preds.vulnerability)
    });
    for (prep, (rumor_prob, virality, vuln)) in prepared.iter().zip(&per_event) {
        for (u, user) in prep.graph.users.iter().enumerate() {
            write_row(
                out,
                &[&prep.event_id, user, rumor_prob, virality, &vuln[u]],
            )?;
        }
    }
    Ok(())
}
