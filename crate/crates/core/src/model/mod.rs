//! Full multi-task model: backbone plus the three task heads.
//!
//! Parameters are plain structs of dense tensors. A fixed declaration
//! order (the order of [`ModelParams::tensors`]) defines both the flat
//! vector layout the optimizer consumes and the tensor names used by
//! checkpoints, so the three views never disagree.

pub mod forward;
pub mod prepared;

pub use forward::{
    accumulate_backbone_grads, accumulate_head_grads, backward, backward_backbone,
    backward_heads, cvp_refine, forward, forward_backbone, forward_heads, predict_graph_heads,
    predict_vulnerability, BackboneGrads, BackboneOut, CvpCache, DropoutMasks, ForwardCache,
    HeadBoundary, HeadGrads, HeadsOut, Predictions,
};
pub use prepared::{prepare_event, PreparedEvent};

use crate::encoder::{init_mat, BackboneParams, DirectionMode, HashedBowEncoder, SageParams};
use crate::linalg::{relu, relu_backward, Mat, Vec1};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Architecture hyperparameters. Frozen once training starts; stored next
/// to the tensors in every checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    /// Embedding width d.
    pub dim: usize,
    /// Community count of the pooling stage.
    pub communities: usize,
    /// Dropout rate on refined representations during training.
    pub dropout: f64,
    /// Token truncation for the text encoder.
    pub max_post_tokens: usize,
    /// Neighborhood aggregation direction, shared by all layers.
    pub direction: DirectionMode,
    /// Seed of the frozen hashed text projection.
    pub text_seed: u64,
    /// Weight of the pooling regularizers (link reconstruction plus
    /// assignment entropy); 0 disables them.
    pub aux_pool_weight: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 64,
            communities: 50,
            dropout: 0.2,
            max_post_tokens: 50,
            direction: DirectionMode::Undirected,
            text_seed: 0,
            aux_pool_weight: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn text_encoder(&self) -> HashedBowEncoder {
        HashedBowEncoder::new(self.dim, self.text_seed, self.max_post_tokens)
    }
}

/// One-hidden-layer perceptron with rectifier, used by all three heads.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub w1: Mat,
    pub b1: Vec1,
    pub w2: Mat,
    pub b2: Vec1,
}

pub struct MlpCache {
    pub input: Mat,
    pub pre1: Mat,
    pub h1: Mat,
}

pub struct MlpGrads {
    pub d_w1: Mat,
    pub d_b1: Vec1,
    pub d_w2: Mat,
    pub d_b2: Vec1,
}

impl Mlp {
    pub fn init(input: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> Self {
        Mlp {
            w1: init_mat(rng, input, hidden),
            b1: Vec1::zeros(hidden),
            w2: init_mat(rng, hidden, output),
            b2: Vec1::zeros(output),
        }
    }

    /// Row-wise forward: each input row maps to one output row.
    pub fn forward(&self, x: &Mat) -> (Mat, MlpCache) {
        let pre1 = x.dot(&self.w1) + &self.b1;
        let h1 = relu(&pre1);
        let out = h1.dot(&self.w2) + &self.b2;
        (
            out,
            MlpCache {
                input: x.clone(),
                pre1,
                h1,
            },
        )
    }

    pub fn backward(&self, cache: &MlpCache, d_out: &Mat) -> (MlpGrads, Mat) {
        let d_w2 = cache.h1.t().dot(d_out);
        let d_b2 = d_out.sum_axis(ndarray::Axis(0));
        let d_h1 = d_out.dot(&self.w2.t());
        let d_pre1 = relu_backward(&cache.pre1, &d_h1);
        let d_w1 = cache.input.t().dot(&d_pre1);
        let d_b1 = d_pre1.sum_axis(ndarray::Axis(0));
        let d_x = d_pre1.dot(&self.w1.t());
        (
            MlpGrads {
                d_w1,
                d_b1,
                d_w2,
                d_b2,
            },
            d_x,
        )
    }

}

/// Task-specific parameters: rumor head, virality head, and the
/// vulnerability head together with its refinement aggregation layer.
#[derive(Debug, Clone)]
pub struct HeadParams {
    pub rumor: Mlp,
    pub virality: Mlp,
    pub cvp: SageParams,
    pub vuln: Mlp,
}

/// Ownership of a tensor, used to partition updates between the shared
/// backbone and the per-task heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Backbone,
    RumorHead,
    ViralityHead,
    VulnHead,
}

impl ParamGroup {
    pub fn of(tensor_name: &str) -> ParamGroup {
        if tensor_name.starts_with("backbone.") {
            ParamGroup::Backbone
        } else if tensor_name.starts_with("heads.rumor.") {
            ParamGroup::RumorHead
        } else if tensor_name.starts_with("heads.virality.") {
            ParamGroup::ViralityHead
        } else if tensor_name.starts_with("heads.cvp.") || tensor_name.starts_with("heads.vuln.") {
            ParamGroup::VulnHead
        } else {
            panic!("unknown tensor name {tensor_name:?}");
        }
    }

    /// Index into per-task arrays; the backbone has none.
    pub fn task_index(self) -> Option<usize> {
        match self {
            ParamGroup::Backbone => None,
            ParamGroup::RumorHead => Some(0),
            ParamGroup::ViralityHead => Some(1),
            ParamGroup::VulnHead => Some(2),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub backbone: BackboneParams,
    pub heads: HeadParams,
}

pub enum TensorRef<'a> {
    M(&'a Mat),
    V(&'a Vec1),
}

pub enum TensorMut<'a> {
    M(&'a mut Mat),
    V(&'a mut Vec1),
}

impl TensorRef<'_> {
    pub fn len(&self) -> usize {
        match self {
            TensorRef::M(m) => m.len(),
            TensorRef::V(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> Box<dyn Iterator<Item = &f64> + '_> {
        match self {
            TensorRef::M(m) => Box::new(m.iter()),
            TensorRef::V(v) => Box::new(v.iter()),
        }
    }
}

fn push_sage<'a>(out: &mut Vec<(String, TensorRef<'a>)>, prefix: &str, p: &'a SageParams) {
    out.push((format!("{prefix}.w"), TensorRef::M(&p.w)));
    if let Some(w) = &p.w_rev {
        out.push((format!("{prefix}.w_rev"), TensorRef::M(w)));
    }
    if let Some(w) = &p.w_proj {
        out.push((format!("{prefix}.w_proj"), TensorRef::M(w)));
    }
}

fn push_sage_mut<'a>(out: &mut Vec<(String, TensorMut<'a>)>, prefix: &str, p: &'a mut SageParams) {
    out.push((format!("{prefix}.w"), TensorMut::M(&mut p.w)));
    if let Some(w) = &mut p.w_rev {
        out.push((format!("{prefix}.w_rev"), TensorMut::M(w)));
    }
    if let Some(w) = &mut p.w_proj {
        out.push((format!("{prefix}.w_proj"), TensorMut::M(w)));
    }
}

fn push_mlp<'a>(out: &mut Vec<(String, TensorRef<'a>)>, prefix: &str, m: &'a Mlp) {
    out.push((format!("{prefix}.w1"), TensorRef::M(&m.w1)));
    out.push((format!("{prefix}.b1"), TensorRef::V(&m.b1)));
    out.push((format!("{prefix}.w2"), TensorRef::M(&m.w2)));
    out.push((format!("{prefix}.b2"), TensorRef::V(&m.b2)));
}

fn push_mlp_mut<'a>(out: &mut Vec<(String, TensorMut<'a>)>, prefix: &str, m: &'a mut Mlp) {
    out.push((format!("{prefix}.w1"), TensorMut::M(&mut m.w1)));
    out.push((format!("{prefix}.b1"), TensorMut::V(&mut m.b1)));
    out.push((format!("{prefix}.w2"), TensorMut::M(&mut m.w2)));
    out.push((format!("{prefix}.b2"), TensorMut::V(&mut m.b2)));
}

impl ModelParams {
    /// Fresh parameters; tensor draw order is fixed so the same seed
    /// always yields the same model.
    pub fn init(config: &ModelConfig, rng: &mut impl Rng) -> Self {
        let d = config.dim;
        let backbone = BackboneParams::init(d, config.communities, config.direction, rng);
        let heads = HeadParams {
            rumor: Mlp::init(d, d, 2, rng),
            virality: Mlp::init(d, d, 1, rng),
            cvp: SageParams::init(2 * d, d, config.direction, rng),
            vuln: Mlp::init(d, d, 1, rng),
        };
        ModelParams { backbone, heads }
    }

    /// Named tensors in flat-layout order.
    pub fn tensors(&self) -> Vec<(String, TensorRef<'_>)> {
        let mut out = Vec::with_capacity(24);
        out.push(("backbone.time_w".to_string(), TensorRef::V(&self.backbone.time_w)));
        out.push(("backbone.time_b".to_string(), TensorRef::V(&self.backbone.time_b)));
        out.push(("backbone.w_q".to_string(), TensorRef::M(&self.backbone.w_q)));
        out.push(("backbone.w_k".to_string(), TensorRef::M(&self.backbone.w_k)));
        out.push(("backbone.w_v".to_string(), TensorRef::M(&self.backbone.w_v)));
        push_sage(&mut out, "backbone.sage_embed", &self.backbone.sage_embed);
        push_sage(&mut out, "backbone.sage_assign", &self.backbone.sage_assign);
        push_mlp(&mut out, "heads.rumor", &self.heads.rumor);
        push_mlp(&mut out, "heads.virality", &self.heads.virality);
        push_sage(&mut out, "heads.cvp", &self.heads.cvp);
        push_mlp(&mut out, "heads.vuln", &self.heads.vuln);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, TensorMut<'_>)> {
        let mut out = Vec::with_capacity(24);
        out.push(("backbone.time_w".to_string(), TensorMut::V(&mut self.backbone.time_w)));
        out.push(("backbone.time_b".to_string(), TensorMut::V(&mut self.backbone.time_b)));
        out.push(("backbone.w_q".to_string(), TensorMut::M(&mut self.backbone.w_q)));
        out.push(("backbone.w_k".to_string(), TensorMut::M(&mut self.backbone.w_k)));
        out.push(("backbone.w_v".to_string(), TensorMut::M(&mut self.backbone.w_v)));
        push_sage_mut(&mut out, "backbone.sage_embed", &mut self.backbone.sage_embed);
        push_sage_mut(&mut out, "backbone.sage_assign", &mut self.backbone.sage_assign);
        push_mlp_mut(&mut out, "heads.rumor", &mut self.heads.rumor);
        push_mlp_mut(&mut out, "heads.virality", &mut self.heads.virality);
        push_sage_mut(&mut out, "heads.cvp", &mut self.heads.cvp);
        push_mlp_mut(&mut out, "heads.vuln", &mut self.heads.vuln);
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Concatenation of all tensors, row-major, in declaration order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (_, t) in self.tensors() {
            out.extend(t.iter().copied());
        }
        out
    }

    pub fn load_flat(&mut self, flat: &[f64]) {
        let mut at = 0usize;
        for (_, t) in self.tensors_mut() {
            match t {
                TensorMut::M(m) => {
                    for v in m.iter_mut() {
                        *v = flat[at];
                        at += 1;
                    }
                }
                TensorMut::V(v) => {
                    for x in v.iter_mut() {
                        *x = flat[at];
                        at += 1;
                    }
                }
            }
        }
        assert_eq!(at, flat.len(), "flat parameter length mismatch");
    }

    /// Same shapes, all zeros; the container used for gradients.
    pub fn zeros_like(&self) -> ModelParams {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            match t {
                TensorMut::M(m) => m.fill(0.0),
                TensorMut::V(v) => v.fill(0.0),
            }
        }
        z
    }

    /// self += s · other, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, s: f64) {
        let theirs = other.flat();
        let mut at = 0usize;
        for (_, t) in self.tensors_mut() {
            match t {
                TensorMut::M(m) => {
                    for v in m.iter_mut() {
                        *v += s * theirs[at];
                        at += 1;
                    }
                }
                TensorMut::V(v) => {
                    for x in v.iter_mut() {
                        *x += s * theirs[at];
                        at += 1;
                    }
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            match t {
                TensorMut::M(m) => m.mapv_inplace(|v| v * s),
                TensorMut::V(v) => v.mapv_inplace(|x| x * s),
            }
        }
    }

    /// True when any entry is NaN or infinite.
    pub fn any_non_finite(&self) -> bool {
        self.tensors().iter().any(|(_, t)| t.iter().any(|v| !v.is_finite()))
    }

    /// Zeros every tensor outside the given group (in place); used to mask
    /// gradients of disabled heads.
    pub fn retain_group(&mut self, keep: &dyn Fn(ParamGroup) -> bool) {
        for (name, t) in self.tensors_mut() {
            if keep(ParamGroup::of(&name)) {
                continue;
            }
            match t {
                TensorMut::M(m) => m.fill(0.0),
                TensorMut::V(v) => v.fill(0.0),
            }
        }
    }
}

impl std::fmt::Debug for TensorRef<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TensorRef::M(m) => write!(f, "Mat{:?}", m.shape()),
            TensorRef::V(v) => write!(f, "Vec[{}]", v.len()),
        }
    }
}

/// Column sums of the community embeddings: the graph readout feeding the
/// rumor and virality heads.
pub fn readout_sum(x_c: &Mat) -> Vec1 {
    x_c.sum_axis(ndarray::Axis(0))
}
