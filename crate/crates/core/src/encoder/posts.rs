//! Time-aware post embeddings.
//!
//! Each observed post becomes one row `[content, time]`: a frozen text
//! encoding of dimension d next to a learned affine image of its
//! normalized timestamp, also of dimension d.

use super::text::TextEncoder;
use super::BackboneParams;
use crate::data::ObservedEvent;
use crate::linalg::{Mat, Vec1};

/// Floor for the observation window so events whose every post shares one
/// timestamp stay finite. Retained posts never exceed the window, so
/// normalized times always land in [0, 1].
pub const MIN_WINDOW: f64 = 1e-9;

/// Timestamps divided by the observation window f·T.
pub fn normalized_times(observed: &ObservedEvent<'_>) -> Vec1 {
    let w = observed.window().max(MIN_WINDOW);
    Vec1::from_iter((0..observed.n_posts()).map(|i| observed.post(i).ts / w))
}

/// Frozen content rows, one per observed post.
pub fn encode_contents(observed: &ObservedEvent<'_>, encoder: &dyn TextEncoder) -> Mat {
    let n = observed.n_posts();
    let mut m = Mat::zeros((n, encoder.dim()));
    for i in 0..n {
        m.row_mut(i).assign(&encoder.encode(&observed.post(i).text));
    }
    m
}

/// Assembles the |V|×2d post matrix from precomputed pieces: row i is
/// `[content_i, τ_i·w + b]`. Split out from [`embed_posts`] so the frozen
/// halves can be cached across training steps.
pub fn embed_posts_from(content: &Mat, tau: &Vec1, time_w: &Vec1, time_b: &Vec1) -> Mat {
    let (n, d) = (content.nrows(), content.ncols());
    assert_eq!(tau.len(), n);
    assert_eq!(time_w.len(), d);
    assert_eq!(time_b.len(), d);
    let mut out = Mat::zeros((n, 2 * d));
    for i in 0..n {
        for j in 0..d {
            out[[i, j]] = content[[i, j]];
            out[[i, d + j]] = tau[i] * time_w[j] + time_b[j];
        }
    }
    out
}

/// Full post-embedding pass over an observed event.
pub fn embed_posts(
    observed: &ObservedEvent<'_>,
    encoder: &dyn TextEncoder,
    params: &BackboneParams,
) -> Mat {
    let content = encode_contents(observed, encoder);
    let tau = normalized_times(observed);
    embed_posts_from(&content, &tau, &params.time_w, &params.time_b)
}

/// Gradients of the time projection given upstream `dX_p`. The content
/// half is frozen, so only columns d.. contribute:
/// `dw_j = Σ_i τ_i·dX_p[i, d+j]`, `db_j = Σ_i dX_p[i, d+j]`.
pub fn embed_posts_backward(tau: &Vec1, d_xp: &Mat) -> (Vec1, Vec1) {
    let n = d_xp.nrows();
    assert_eq!(tau.len(), n);
    assert_eq!(d_xp.ncols() % 2, 0);
    let d = d_xp.ncols() / 2;
    let mut dw = Vec1::zeros(d);
    let mut db = Vec1::zeros(d);
    for i in 0..n {
        for j in 0..d {
            let g = d_xp[[i, d + j]];
            dw[j] += tau[i] * g;
            db[j] += g;
        }
    }
    (dw, db)
}
