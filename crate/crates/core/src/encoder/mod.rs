//! Shared encoder backbone.
//!
//! One observed event flows through four stages: frozen text encodings
//! joined with learned time features ([`posts`]), user-post cross
//! attention ([`attention`]), one round of neighborhood aggregation
//! ([`sage`]), and soft community pooling ([`diffpool`]). The parameters
//! of all four stages form [`BackboneParams`], shared by every task head.

pub mod attention;
pub mod diffpool;
pub mod posts;
pub mod sage;
pub mod text;

pub use attention::{cross_attention, cross_attention_backward, AttentionCache, AttentionGrads};
pub use diffpool::{
    diffpool, diffpool_backward, pool_aux_backward, pool_aux_losses, DiffpoolCache, DiffpoolGrads,
    PooledGraph,
};
pub use posts::{embed_posts, embed_posts_backward, embed_posts_from, encode_contents, normalized_times};
pub use sage::{
    sage_layer, sage_layer_backward, Activation, DirectionMode, SageCache, SageGrads, SageParams,
};
pub use text::{HashedBowEncoder, TextEncoder};

use crate::linalg::{Mat, Vec1};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Scaled normal initialization: entries N(0, 1/fan_in) with fan_in taken
/// as the row count (inputs multiply from the left as row vectors).
pub(crate) fn init_mat(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let scale = 1.0 / (rows as f64).sqrt();
    Mat::from_shape_fn((rows, cols), |_| normal.sample(rng) * scale)
}

pub(crate) fn init_vec(rng: &mut impl Rng, len: usize, scale: f64) -> Vec1 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    Vec1::from_iter((0..len).map(|_| normal.sample(rng) * scale))
}

impl SageParams {
    /// Fresh weights for an in → out aggregation layer. The reverse and
    /// projection matrices exist only in bidirectional mode.
    pub fn init(in_dim: usize, out_dim: usize, mode: DirectionMode, rng: &mut impl Rng) -> Self {
        let w = init_mat(rng, 2 * in_dim, out_dim);
        let (w_rev, w_proj) = if mode == DirectionMode::Bidirectional {
            (
                Some(init_mat(rng, 2 * in_dim, out_dim)),
                Some(init_mat(rng, 2 * out_dim, out_dim)),
            )
        } else {
            (None, None)
        };
        SageParams { w, w_rev, w_proj }
    }
}

/// All trainable backbone tensors. Width d fixes every shape; the
/// assignment layer's output width is the community count.
#[derive(Debug, Clone)]
pub struct BackboneParams {
    /// Time projection, scalar τ to d values: τ·w + b.
    pub time_w: Vec1,
    pub time_b: Vec1,
    /// Attention maps: d×d query, (2d)×d key and value.
    pub w_q: Mat,
    pub w_k: Mat,
    pub w_v: Mat,
    /// Embedding-pass aggregation, d → d.
    pub sage_embed: SageParams,
    /// Assignment-pass aggregation, d → |V_c|.
    pub sage_assign: SageParams,
}

impl BackboneParams {
    pub fn init(d: usize, communities: usize, mode: DirectionMode, rng: &mut impl Rng) -> Self {
        assert!(d > 0 && communities > 0);
        let scale = 1.0 / (d as f64).sqrt();
        BackboneParams {
            time_w: init_vec(rng, d, scale),
            time_b: init_vec(rng, d, scale),
            w_q: init_mat(rng, d, d),
            w_k: init_mat(rng, 2 * d, d),
            w_v: init_mat(rng, 2 * d, d),
            sage_embed: SageParams::init(d, d, mode, rng),
            sage_assign: SageParams::init(d, communities, mode, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.w_q.nrows()
    }

    pub fn communities(&self) -> usize {
        self.sage_assign.out_dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_shapes_follow_width_and_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = BackboneParams::init(8, 5, DirectionMode::Undirected, &mut rng);
        assert_eq!(p.dim(), 8);
        assert_eq!(p.communities(), 5);
        assert_eq!(p.time_w.len(), 8);
        assert_eq!(p.w_q.shape(), &[8, 8]);
        assert_eq!(p.w_k.shape(), &[16, 8]);
        assert_eq!(p.w_v.shape(), &[16, 8]);
        assert_eq!(p.sage_embed.w.shape(), &[16, 8]);
        assert!(p.sage_embed.w_rev.is_none());
        assert_eq!(p.sage_assign.w.shape(), &[16, 5]);

        let bi = BackboneParams::init(4, 3, DirectionMode::Bidirectional, &mut rng);
        assert_eq!(bi.sage_embed.w_rev.as_ref().unwrap().shape(), &[8, 4]);
        assert_eq!(bi.sage_embed.w_proj.as_ref().unwrap().shape(), &[8, 4]);
        assert_eq!(bi.sage_assign.w_proj.as_ref().unwrap().shape(), &[6, 3]);
        assert_eq!(bi.communities(), 3);
    }

    #[test]
    fn same_seed_same_init() {
        let a = BackboneParams::init(6, 4, DirectionMode::Undirected, &mut ChaCha8Rng::seed_from_u64(9));
        let b = BackboneParams::init(6, 4, DirectionMode::Undirected, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.w_q, b.w_q);
        assert_eq!(a.sage_assign.w, b.sage_assign.w);
        let c = BackboneParams::init(6, 4, DirectionMode::Undirected, &mut ChaCha8Rng::seed_from_u64(10));
        assert_ne!(a.w_q, c.w_q);
    }
}
