//! User-post cross attention.
//!
//! Each user row queries the observed posts: Q = X_u0·W_q, K = X_p·W_k,
//! V = X_p·W_v, and the refined user matrix is
//! `X_u1 = row_softmax(Q·Kᵀ/√d)·V`. One head, no output projection.

use crate::linalg::{row_softmax, row_softmax_backward, Mat};

/// Intermediates retained for the backward pass.
pub struct AttentionCache {
    pub q: Mat,
    pub k: Mat,
    pub v: Mat,
    /// Row-stochastic attention over posts, |U|×|V|.
    pub p: Mat,
}

pub struct AttentionGrads {
    pub d_wq: Mat,
    pub d_wk: Mat,
    pub d_wv: Mat,
    pub d_xu0: Mat,
    pub d_xp: Mat,
}

/// Forward pass. `x_u0` is |U|×d, `x_p` is |V|×2d; the scale is 1/√d with
/// d = W_q output width.
pub fn cross_attention(
    x_u0: &Mat,
    x_p: &Mat,
    w_q: &Mat,
    w_k: &Mat,
    w_v: &Mat,
) -> (Mat, AttentionCache) {
    assert!(x_p.nrows() >= 1);
    assert_eq!(x_u0.ncols(), w_q.nrows());
    assert_eq!(x_p.ncols(), w_k.nrows());
    assert_eq!(x_p.ncols(), w_v.nrows());
    let q = x_u0.dot(w_q);
    let k = x_p.dot(w_k);
    let v = x_p.dot(w_v);
    let scale = 1.0 / (w_q.ncols() as f64).sqrt();
    let scores = q.dot(&k.t()) * scale;
    let p = row_softmax(&scores);
    let x_u1 = p.dot(&v);
    (x_u1, AttentionCache { q, k, v, p })
}

/// Backward pass for [`cross_attention`].
pub fn cross_attention_backward(
    x_u0: &Mat,
    x_p: &Mat,
    w_q: &Mat,
    w_k: &Mat,
    w_v: &Mat,
    cache: &AttentionCache,
    d_xu1: &Mat,
) -> AttentionGrads {
    let scale = 1.0 / (w_q.ncols() as f64).sqrt();
    let dp = d_xu1.dot(&cache.v.t());
    let dv = cache.p.t().dot(d_xu1);
    let dscores = row_softmax_backward(&cache.p, &dp);
    let dq = dscores.dot(&cache.k) * scale;
    let dk = dscores.t().dot(&cache.q) * scale;
    AttentionGrads {
        d_wq: x_u0.t().dot(&dq),
        d_wk: x_p.t().dot(&dk),
        d_wv: x_p.t().dot(&dv),
        d_xu0: dq.dot(&w_q.t()),
        d_xp: dk.dot(&w_k.t()) + dv.dot(&w_v.t()),
    }
}
