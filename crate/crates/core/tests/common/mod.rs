//! Shared proptest strategies and invariant checks. Each `check_*`
//! panics on violation so the same body serves the property suite and
//! the acceptance gate.

#![allow(dead_code)]

use cascade_core::data::{
    observe_prefix, parse_event, split_corpus, Label, PropagationEvent, RawEventRecord, RawPost,
    UserInteractionGraph,
};
use cascade_core::data::{build_user_graph, generate_synthetic_corpus, LabelSet, SynthConfig};
use cascade_core::encoder::{cross_attention, diffpool, DirectionMode, SageParams};
use cascade_core::linalg::Mat;
use cascade_core::model::{forward, prepare_event, ModelParams};
use cascade_core::pretrain::{build_global_user_graph, pretrain_user_embeddings, PretrainConfig};
use cascade_core::ModelConfig;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

const WORDS: [&str; 12] = [
    "storm", "report", "official", "video", "breaking", "confirmed", "hoax", "share", "photo",
    "witness", "rescue", "alert",
];

/// Random propagation tree: parent index precedes child index, timestamps
/// nondecreasing in index, users drawn from a pool of the same size as the
/// post count so repeats occur.
pub fn arb_event() -> impl Strategy<Value = PropagationEvent> {
    (2usize..=16)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec(any::<u64>(), n - 1),
                prop::collection::vec(0..n, n),
                prop::collection::vec(0.0f64..5.0, n - 1),
                prop::collection::vec(0..WORDS.len(), n),
                any::<bool>(),
            )
        })
        .prop_map(|(n, parents, users, increments, words, rumor)| {
            let mut ts = vec![0.0f64];
            for inc in &increments {
                ts.push(ts.last().unwrap() + inc);
            }
            let posts = (0..n)
                .map(|i| RawPost {
                    post_id: format!("p{i}"),
                    parent_id: (i > 0).then(|| format!("p{}", parents[i - 1] as usize % i)),
                    user_id: format!("u{}", users[i]),
                    ts: ts[i],
                    text: WORDS[words[i]].to_string(),
                })
                .collect();
            parse_event(RawEventRecord {
                event_id: "ev".to_string(),
                label: if rumor { Label::Rumor } else { Label::NonRumor },
                posts,
            })
            .unwrap()
        })
}

fn arb_mat(rows: usize, cols: usize, mag: f64) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-mag..mag, rows * cols)
        .prop_map(move |v| Mat::from_shape_vec((rows, cols), v).unwrap())
}

#[derive(Debug)]
pub struct AttnInputs {
    pub x_u: Mat,
    pub x_p: Mat,
    pub w_q: Mat,
    pub w_k: Mat,
    pub w_v: Mat,
}

/// Shapes are drawn independently; magnitudes reach the regime where an
/// unshifted softmax would overflow.
pub fn arb_attention_inputs() -> impl Strategy<Value = AttnInputs> {
    (1usize..=5, 1usize..=6, 1usize..=6, 1usize..=5, 1usize..=4, 1usize..=4).prop_flat_map(
        |(du, dp, nu, np, da, dv)| {
            (
                arb_mat(nu, du, 30.0),
                arb_mat(np, dp, 30.0),
                arb_mat(du, da, 3.0),
                arb_mat(dp, da, 3.0),
                arb_mat(dp, dv, 3.0),
            )
                .prop_map(|(x_u, x_p, w_q, w_k, w_v)| AttnInputs {
                    x_u,
                    x_p,
                    w_q,
                    w_k,
                    w_v,
                })
        },
    )
}

pub fn check_attention_rows_stochastic(inp: &AttnInputs) {
    let (_, cache) = cross_attention(&inp.x_u, &inp.x_p, &inp.w_q, &inp.w_k, &inp.w_v);
    assert_eq!(cache.p.nrows(), inp.x_u.nrows());
    assert_eq!(cache.p.ncols(), inp.x_p.nrows());
    for row in cache.p.rows() {
        assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        let sum: f64 = row.sum();
        assert!((sum - 1.0).abs() <= 1e-6, "row sum {sum}");
    }
}

#[derive(Debug)]
pub struct PoolInputs {
    pub x: Mat,
    pub graph: UserInteractionGraph,
    pub assign: SageParams,
}

pub fn arb_pool_inputs() -> impl Strategy<Value = PoolInputs> {
    (1usize..=8, 1usize..=4, 1usize..=5).prop_flat_map(|(n, d, k)| {
        (
            arb_mat(n, d, 10.0),
            prop::collection::vec((0..n, 0..n), 0..=2 * n),
            arb_mat(2 * d, k, 2.0),
        )
            .prop_map(move |(x, edges, w)| {
                let mut adjacency = Mat::zeros((n, n));
                let mut directed = Vec::new();
                for &(a, b) in &edges {
                    if a == b {
                        continue;
                    }
                    adjacency[[a, b]] = 1.0;
                    adjacency[[b, a]] = 1.0;
                    directed.push((a, b));
                }
                directed.sort_unstable();
                directed.dedup();
                PoolInputs {
                    x,
                    graph: UserInteractionGraph {
                        users: (0..n).map(|i| format!("u{i}")).collect(),
                        adjacency,
                        directed_edges: directed,
                    },
                    assign: SageParams {
                        w,
                        w_rev: None,
                        w_proj: None,
                    },
                }
            })
    })
}

pub fn check_assignment_rows_stochastic(inp: &PoolInputs) {
    let (pooled, _) = diffpool(&inp.x, &inp.graph, &inp.assign, DirectionMode::Undirected);
    for row in pooled.c.rows() {
        assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        let sum: f64 = row.sum();
        assert!((sum - 1.0).abs() <= 1e-6, "row sum {sum}");
    }
    let k = pooled.a_c.nrows();
    for i in 0..k {
        for j in 0..k {
            assert!(pooled.a_c[[i, j]] >= 0.0);
            assert!((pooled.a_c[[i, j]] - pooled.a_c[[j, i]]).abs() <= 1e-9);
        }
    }
}

pub fn check_user_graph_symmetric_zero_diagonal(event: &PropagationEvent, fraction: f64) {
    let graph = build_user_graph(&observe_prefix(event, fraction));
    let n = graph.n_users();
    assert!(n >= 1);
    for i in 0..n {
        assert_eq!(graph.adjacency[[i, i]], 0.0);
        for j in 0..n {
            let a = graph.adjacency[[i, j]];
            assert!(a == 0.0 || a == 1.0);
            assert_eq!(a, graph.adjacency[[j, i]]);
        }
    }
    for &(a, b) in &graph.directed_edges {
        assert_ne!(a, b);
        assert_eq!(graph.adjacency[[a, b]], 1.0);
    }
}

pub fn check_prefix_monotone(event: &PropagationEvent, f1: f64, f2: f64) {
    let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
    let early = observe_prefix(event, lo);
    let late = observe_prefix(event, hi);
    assert!(early.n_posts() >= 1);
    // Both retain ascending post indices, so subset means prefix.
    assert!(early.posts.len() <= late.posts.len());
    assert_eq!(early.posts[..], late.posts[..early.posts.len()]);
    assert_eq!(observe_prefix(event, 1.0).n_posts(), event.posts.len());
}

pub fn check_model_outputs_structurally_sound(event: &PropagationEvent, fraction: f64, seed: u64) {
    let corpus = std::slice::from_ref(event);
    let labels = LabelSet::derive(corpus);
    let config = ModelConfig {
        dim: 4,
        communities: 3,
        ..ModelConfig::default()
    };
    let table = pretrain_user_embeddings(
        &build_global_user_graph(corpus),
        &PretrainConfig {
            dim: 4,
            lr: 0.0,
            ..PretrainConfig::default()
        },
        seed,
    );
    let encoder = config.text_encoder();
    let prep = prepare_event(event, fraction, &encoder, &table, &labels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::init(&config, &mut rng);
    let (preds, cache) = forward(&prep, &params, config.direction, None);

    for row in cache.backbone.att.p.rows() {
        let sum: f64 = row.sum();
        assert!((sum - 1.0).abs() <= 1e-6);
    }
    for row in cache.backbone.pooled.c.rows() {
        let sum: f64 = row.sum();
        assert!((sum - 1.0).abs() <= 1e-6);
    }
    assert!(preds.vulnerability.iter().all(|&v| v > 0.0 && v < 1.0));
    assert!(preds.virality.is_finite());
    assert!(preds.rumor_logits.iter().all(|l| l.is_finite()));
}

pub fn check_split_no_leakage(events: usize, synth_seed: u64, split_seed: u64) {
    let (corpus, _) = generate_synthetic_corpus(
        &SynthConfig {
            events,
            user_pool: 3 * events,
            mean_cascade: 5.0,
            nonoverlap_fraction: 0.3,
            ..SynthConfig::default()
        },
        synth_seed,
    )
    .unwrap();
    let splits = split_corpus(&corpus, split_seed).unwrap();
    assert_eq!(splits, split_corpus(&corpus, split_seed).unwrap());

    let mut seen: HashSet<&str> = HashSet::new();
    for id in splits
        .train
        .iter()
        .chain(&splits.validation)
        .chain(&splits.test)
    {
        assert!(seen.insert(id), "event {id} in two splits");
    }
    assert_eq!(seen.len(), corpus.len());
    assert_eq!(splits.validation.len(), corpus.len() / 10);
    assert_eq!(splits.test.len(), corpus.len() / 10);

    let users_of = |id: &str| -> HashSet<&str> {
        corpus
            .iter()
            .find(|e| e.event_id == id)
            .unwrap()
            .posts
            .iter()
            .map(|p| p.user_id.as_str())
            .collect()
    };
    let labels = LabelSet::derive(&corpus);
    for id in splits.validation.iter().chain(&splits.test) {
        let held = users_of(id);
        for event in &corpus {
            if event.event_id == *id {
                continue;
            }
            for post in &event.posts {
                assert!(
                    !held.contains(post.user_id.as_str()),
                    "user {} of held-out {id} also in {}",
                    post.user_id,
                    event.event_id
                );
            }
        }
        // Held-out users appear in exactly one event, so none carries a
        // vulnerability label.
        for user in held {
            assert!(!labels.vulnerability.contains_key(user));
        }
    }
}
