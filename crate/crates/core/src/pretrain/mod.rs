//! Contrastive pre-training of general user embeddings.
//!
//! Users that co-occur in cascades land near each other: a fixed-length
//! random walk from an anchor defines its positives, any user off the walk
//! is a negative, and each triplet takes one gradient step that raises
//! x_a·x_pos − x_a·x_neg. Embeddings are re-projected to unit norm after
//! every update, which keeps the bilinear objective bounded.
//!
//! The global graph is built from TRAINING events only, so users of
//! held-out events never receive a trained vector; they resolve to the
//! fallback (the renormalized mean of all trained vectors).

use crate::data::{build_user_graph, observe_prefix, PropagationEvent};
use crate::linalg::Vec1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

/// Union of per-event interaction graphs over full training events,
/// identical users merged.
#[derive(Debug, Clone)]
pub struct GlobalUserGraph {
    /// First-appearance order across the event list.
    pub users: Vec<String>,
    pub index: HashMap<String, usize>,
    /// Sorted, deduplicated neighbor lists; undirected, no self-loops.
    pub neighbors: Vec<Vec<usize>>,
}

impl GlobalUserGraph {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors[u].len()
    }
}

pub fn build_global_user_graph(train_events: &[PropagationEvent]) -> GlobalUserGraph {
    let mut users: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut neighbors: Vec<Vec<usize>> = Vec::new();

    for event in train_events {
        let observed = observe_prefix(event, 1.0);
        let graph = build_user_graph(&observed);
        let global_ids: Vec<usize> = graph
            .users
            .iter()
            .map(|u| {
                *index.entry(u.clone()).or_insert_with(|| {
                    users.push(u.clone());
                    neighbors.push(Vec::new());
                    users.len() - 1
                })
            })
            .collect();
        for a in 0..graph.n_users() {
            for b in (a + 1)..graph.n_users() {
                if graph.adjacency[[a, b]] != 0.0 {
                    let (ga, gb) = (global_ids[a], global_ids[b]);
                    neighbors[ga].push(gb);
                    neighbors[gb].push(ga);
                }
            }
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
        list.dedup();
    }
    GlobalUserGraph {
        users,
        index,
        neighbors,
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SampleError {
    #[error("anchor has no neighbors")]
    IsolatedAnchor,
    #[error("walk covered every other user; no negative available")]
    NoNegativeAvailable,
}

/// One contrastive triplet: a fixed-length simple random walk from the
/// anchor; positive drawn uniformly over walk positions that are not the
/// anchor; negative drawn uniformly over users neither on the walk nor the
/// anchor.
pub fn sample_contrastive_triplet(
    graph: &GlobalUserGraph,
    anchor: usize,
    walk_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, usize, usize), SampleError> {
    if graph.degree(anchor) == 0 {
        return Err(SampleError::IsolatedAnchor);
    }
    let mut path = Vec::with_capacity(walk_len);
    let mut current = anchor;
    for _ in 0..walk_len {
        let nbrs = &graph.neighbors[current];
        current = nbrs[rng.gen_range(0..nbrs.len())];
        path.push(current);
    }
    let candidates: Vec<usize> = path.iter().copied().filter(|&u| u != anchor).collect();
    // The first step leaves the anchor (no self-loops), so candidates is
    // never empty.
    let positive = candidates[rng.gen_range(0..candidates.len())];

    let mut on_path = vec![false; graph.n_users()];
    on_path[anchor] = true;
    for &u in &path {
        on_path[u] = true;
    }
    let off_path_count = on_path.iter().filter(|&&b| !b).count();
    if off_path_count == 0 {
        return Err(SampleError::NoNegativeAvailable);
    }
    let negative = loop {
        let u = rng.gen_range(0..graph.n_users());
        if !on_path[u] {
            break u;
        }
    };
    Ok((anchor, positive, negative))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub walk_len: usize,
    pub lr: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            dim: 64,
            epochs: 20,
            walk_len: 5,
            lr: 5e-3,
        }
    }
}

/// Immutable table of trained user embeddings plus a fallback row for
/// users unseen at pre-training time.
#[derive(Debug, Clone, PartialEq)]
pub struct UserEmbeddingTable {
    pub dim: usize,
    pub users: Vec<String>,
    pub index: HashMap<String, usize>,
    pub vectors: Vec<Vec1>,
    pub fallback: Vec1,
}

impl UserEmbeddingTable {
    /// Trained vector if present, fallback otherwise. Never fails.
    pub fn lookup(&self, user_id: &str) -> &Vec1 {
        match self.index.get(user_id) {
            Some(&i) => &self.vectors[i],
            None => &self.fallback,
        }
    }
}

fn renormalize(v: &mut Vec1) {
    let norm = v.dot(v).sqrt();
    if norm > 1e-12 {
        *v /= norm;
    }
}

/// Trains the table by SGD on loss = x_a·x_neg − x_a·x_pos per triplet,
/// one triplet per connected anchor per epoch, with unit-norm re-projection
/// after each update. lr = 0 returns the normalized initialization.
pub fn pretrain_user_embeddings(
    graph: &GlobalUserGraph,
    config: &PretrainConfig,
    seed: u64,
) -> UserEmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut vectors: Vec<Vec1> = (0..graph.n_users())
        .map(|_| {
            let mut v = Vec1::from_iter((0..config.dim).map(|_| normal.sample(&mut rng)));
            renormalize(&mut v);
            v
        })
        .collect();

    // lr = 0 makes every update an exact no-op; skip the loop so repeated
    // re-normalization cannot introduce ULP drift.
    let epochs = if config.lr == 0.0 { 0 } else { config.epochs };
    for _epoch in 0..epochs {
        for anchor in 0..graph.n_users() {
            let (a, pos, neg) =
                match sample_contrastive_triplet(graph, anchor, config.walk_len, &mut rng) {
                    Ok(t) => t,
                    Err(_) => continue,
                };
            // d(x_a·x_neg − x_a·x_pos)/dx_a = x_neg − x_pos, etc.
            let grad_a = &vectors[neg] - &vectors[pos];
            let grad_pos = -&vectors[a];
            let grad_neg = vectors[a].clone();
            vectors[a].scaled_add(-config.lr, &grad_a);
            vectors[pos].scaled_add(-config.lr, &grad_pos);
            vectors[neg].scaled_add(-config.lr, &grad_neg);
            renormalize(&mut vectors[a]);
            renormalize(&mut vectors[pos]);
            renormalize(&mut vectors[neg]);
        }
    }

    let dim = config.dim;
    let mut fallback = Vec1::zeros(dim);
    if !vectors.is_empty() {
        for v in &vectors {
            fallback += v;
        }
        fallback /= vectors.len() as f64;
        let norm = fallback.dot(&fallback).sqrt();
        if norm > 1e-12 {
            fallback /= norm;
        } else {
            // Degenerate mean; any fixed unit vector serves.
            fallback[0] = 1.0;
        }
    }

    UserEmbeddingTable {
        dim,
        users: graph.users.clone(),
        index: graph.index.clone(),
        vectors,
        fallback,
    }
}

#[derive(Debug, Error)]
pub enum TableIoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic; not an embedding table file")]
    BadMagic,
    #[error("unsupported embedding table version {0}")]
    Version(u32),
    #[error("embedding table file is truncated or inconsistent")]
    Corrupt,
}

const TABLE_MAGIC: &[u8; 4] = b"CUET";
const TABLE_VERSION: u32 = 1;

impl UserEmbeddingTable {
    /// Binary layout: magic, version, dim, row count, then (name, floats)
    /// rows; the final row has an empty name and holds the fallback.
    /// Floats are little-endian f64, so the round-trip is bit-exact.
    pub fn save(&self, path: &Path) -> Result<(), TableIoError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(TABLE_MAGIC)?;
        w.write_all(&TABLE_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.users.len() as u64).to_le_bytes())?;
        let write_row = |w: &mut BufWriter<std::fs::File>, name: &str, v: &Vec1| {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            for &x in v.iter() {
                w.write_all(&x.to_le_bytes())?;
            }
            std::io::Result::Ok(())
        };
        for (name, v) in self.users.iter().zip(&self.vectors) {
            write_row(&mut w, name, v)?;
        }
        write_row(&mut w, "", &self.fallback)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<UserEmbeddingTable, TableIoError> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| TableIoError::Corrupt)?;
        if &magic != TABLE_MAGIC {
            return Err(TableIoError::BadMagic);
        }
        let mut buf4 = [0u8; 4];
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf4).map_err(|_| TableIoError::Corrupt)?;
        let version = u32::from_le_bytes(buf4);
        if version != TABLE_VERSION {
            return Err(TableIoError::Version(version));
        }
        r.read_exact(&mut buf4).map_err(|_| TableIoError::Corrupt)?;
        let dim = u32::from_le_bytes(buf4) as usize;
        r.read_exact(&mut buf8).map_err(|_| TableIoError::Corrupt)?;
        let count = u64::from_le_bytes(buf8) as usize;

        let read_row = |r: &mut BufReader<std::fs::File>| -> Result<(String, Vec1), TableIoError> {
            let mut b4 = [0u8; 4];
            r.read_exact(&mut b4).map_err(|_| TableIoError::Corrupt)?;
            let name_len = u32::from_le_bytes(b4) as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name).map_err(|_| TableIoError::Corrupt)?;
            let name = String::from_utf8(name).map_err(|_| TableIoError::Corrupt)?;
            let mut v = Vec1::zeros(dim);
            let mut b8 = [0u8; 8];
            for i in 0..dim {
                r.read_exact(&mut b8).map_err(|_| TableIoError::Corrupt)?;
                v[i] = f64::from_le_bytes(b8);
            }
            Ok((name, v))
        };

        let mut users = Vec::with_capacity(count);
        let mut vectors = Vec::with_capacity(count);
        for _ in 0..count {
            let (name, v) = read_row(&mut r)?;
            if name.is_empty() {
                return Err(TableIoError::Corrupt);
            }
            users.push(name);
            vectors.push(v);
        }
        let (empty, fallback) = read_row(&mut r)?;
        if !empty.is_empty() {
            return Err(TableIoError::Corrupt);
        }
        let index = users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i))
            .collect();
        Ok(UserEmbeddingTable {
            dim,
            users,
            index,
            vectors,
            fallback,
        })
    }
}
