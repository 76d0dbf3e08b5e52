//! Soft community pooling.
//!
//! An assignment aggregation layer scores every user against each
//! community; row-softmax turns the scores into a soft assignment C, and
//! the user graph is pooled to community embeddings `X_c = Cᵀ·X_u2` and a
//! community adjacency `A_c = Cᵀ·A_u·C`.

use super::sage::{sage_layer, sage_layer_backward, Activation, DirectionMode, SageCache, SageGrads, SageParams};
use crate::data::UserInteractionGraph;
use crate::linalg::{row_softmax, row_softmax_backward, Mat};

/// Pooled view of one event graph.
#[derive(Debug, Clone)]
pub struct PooledGraph {
    /// |U|×|V_c| row-stochastic soft assignment.
    pub c: Mat,
    /// |V_c|×d community embeddings.
    pub x_c: Mat,
    /// |V_c|×|V_c| pooled adjacency, symmetric and non-negative.
    pub a_c: Mat,
}

pub struct DiffpoolCache {
    pub sage: SageCache,
    /// Post-activation assignment scores, input to the softmax.
    pub logits: Mat,
}

pub struct DiffpoolGrads {
    pub d_assign: SageGrads,
    /// Combined gradient for the node embeddings, covering both the
    /// pooling product and the assignment-layer input.
    pub d_x: Mat,
}

/// Forward pass. `assign` maps d → |V_c| and shares the backbone's
/// direction mode; scores pass through the same rectifier as every other
/// layer before the softmax.
pub fn diffpool(
    x_u2: &Mat,
    graph: &UserInteractionGraph,
    assign: &SageParams,
    mode: DirectionMode,
) -> (PooledGraph, DiffpoolCache) {
    let (logits, sage) = sage_layer(x_u2, graph, assign, mode, Activation::Relu);
    let c = row_softmax(&logits);
    let x_c = c.t().dot(x_u2);
    let a_c = c.t().dot(&graph.adjacency).dot(&c);
    (PooledGraph { c, x_c, a_c }, DiffpoolCache { sage, logits })
}

/// Backward pass. `d_c_extra` carries any gradient that reaches the
/// assignment matrix from outside the pooled outputs (the refinement path
/// multiplies by C again); pass None when only `x_c`/`a_c` are consumed.
pub fn diffpool_backward(
    x_u2: &Mat,
    graph: &UserInteractionGraph,
    pooled: &PooledGraph,
    cache: &DiffpoolCache,
    assign: &SageParams,
    d_xc: &Mat,
    d_ac: &Mat,
    d_c_extra: Option<&Mat>,
) -> DiffpoolGrads {
    let a = &graph.adjacency;
    let ac = a.dot(&pooled.c);
    // X_c path: dC += X·dX_cᵀ. A_c path: dC += A·C·dA_cᵀ + Aᵀ·C·dA_c.
    let mut d_c = x_u2.dot(&d_xc.t());
    d_c += &ac.dot(&d_ac.t());
    d_c += &a.t().dot(&pooled.c).dot(d_ac);
    if let Some(extra) = d_c_extra {
        d_c += extra;
    }
    let d_logits = row_softmax_backward(&pooled.c, &d_c);
    let d_assign = sage_layer_backward(assign, &cache.sage, &d_logits);
    let d_x = pooled.c.dot(d_xc) + &d_assign.d_x;
    DiffpoolGrads { d_assign, d_x }
}

/// Auxiliary pooling regularizers, disabled unless given positive weight:
/// a link-reconstruction term `‖A − C·Cᵀ‖²_F / |U|²` and the mean row
/// entropy of C.
pub fn pool_aux_losses(c: &Mat, a_u: &Mat) -> (f64, f64) {
    let n = c.nrows() as f64;
    let resid = a_u - &c.dot(&c.t());
    let link = resid.iter().map(|v| v * v).sum::<f64>() / (n * n);
    let entropy = -c.iter().map(|&p| p * (p + ENTROPY_EPS).ln()).sum::<f64>() / n;
    (link, entropy)
}

const ENTROPY_EPS: f64 = 1e-12;

/// dC of `w·(link + entropy)` for [`pool_aux_losses`].
pub fn pool_aux_backward(c: &Mat, a_u: &Mat, weight: f64) -> Mat {
    let n = c.nrows() as f64;
    let resid = a_u - &c.dot(&c.t());
    let mut d_c = resid.dot(c) * (-4.0 / (n * n));
    d_c.zip_mut_with(c, |d, &p| {
        *d += -(1.0 / n) * ((p + ENTROPY_EPS).ln() + p / (p + ENTROPY_EPS));
    });
    d_c * weight
}
