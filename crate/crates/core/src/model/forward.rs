//! End-to-end forward and backward passes.
//!
//! The pass is split at the pooling boundary: [`forward_backbone`] runs
//! the shared stages once, [`forward_heads`] maps them to predictions.
//! Meta-training re-runs only the head stage after its inner update, so
//! the split is load-bearing, not cosmetic. Backward mirrors the split.

use super::prepared::PreparedEvent;
use super::{readout_sum, HeadParams, Mlp, MlpCache, MlpGrads, ModelParams};
use crate::encoder::{
    cross_attention, cross_attention_backward, diffpool, diffpool_backward, embed_posts_backward,
    embed_posts_from, sage_layer, sage_layer_backward, Activation, AttentionCache, DiffpoolCache,
    DirectionMode, PooledGraph, SageCache, SageGrads, SageParams,
};
use crate::linalg::{hcat, sigmoid, Mat, Vec1};
use ndarray::Axis;
use rand::Rng;

/// Model outputs for one observed event.
#[derive(Debug, Clone)]
pub struct Predictions {
    /// Order: [non_rumor, rumor].
    pub rumor_logits: Vec1,
    /// Predicted log₂ unique users, unclamped.
    pub virality: f64,
    /// Per-user scores in (0,1), graph node order.
    pub vulnerability: Vec1,
}

impl Predictions {
    /// Softmax probability of the rumor class.
    pub fn rumor_prob(&self) -> f64 {
        let (a, b) = (self.rumor_logits[0], self.rumor_logits[1]);
        let m = a.max(b);
        let (ea, eb) = ((a - m).exp(), (b - m).exp());
        eb / (ea + eb)
    }

    pub fn predicted_class(&self) -> crate::data::Label {
        if self.rumor_logits[1] > self.rumor_logits[0] {
            crate::data::Label::Rumor
        } else {
            crate::data::Label::NonRumor
        }
    }
}

/// Inverted dropout masks, drawn once per event per step. Entries are 0
/// with probability `rate`, else 1/(1−rate), so expected activations are
/// unchanged and evaluation needs no rescaling.
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    pub m1: Mat,
    pub m2: Mat,
    pub m4: Mat,
}

impl DropoutMasks {
    pub fn draw(n_users: usize, d: usize, rate: f64, rng: &mut impl Rng) -> Self {
        assert!((0.0..1.0).contains(&rate));
        DropoutMasks {
            m1: draw_mask(n_users, d, rate, rng),
            m2: draw_mask(n_users, d, rate, rng),
            m4: draw_mask(n_users, d, rate, rng),
        }
    }
}

fn draw_mask(rows: usize, cols: usize, rate: f64, rng: &mut impl Rng) -> Mat {
    let keep = 1.0 - rate;
    let mut m = Mat::zeros((rows, cols));
    // Explicit element order keeps the draw sequence stable.
    for v in m.iter_mut() {
        *v = if rng.gen::<f64>() < rate { 0.0 } else { 1.0 / keep };
    }
    m
}

fn masked(x: &Mat, m: Option<&Mat>) -> Mat {
    match m {
        Some(mask) => x * mask,
        None => x.clone(),
    }
}

/// Shared-stage intermediates, fixed for a step once backbone parameters
/// and dropout masks are fixed.
pub struct BackboneOut {
    pub x_p: Mat,
    pub att: AttentionCache,
    /// Post-dropout attention output, input to the embedding aggregation.
    pub x_u1: Mat,
    pub sage_embed: SageCache,
    /// Post-dropout node embeddings, input to pooling and refinement.
    pub x_u2: Mat,
    pub pooled: PooledGraph,
    pub pool: DiffpoolCache,
    /// 1×d readout row.
    pub g_row: Mat,
}

/// Head-stage intermediates.
pub struct HeadsOut {
    pub rumor_cache: MlpCache,
    pub vir_cache: MlpCache,
    pub cvp: CvpCache,
    /// Post-dropout refined nodes, input to the vulnerability head.
    pub x_u4: Mat,
    pub vuln_cache: MlpCache,
    /// Sigmoid outputs, kept for the backward pass.
    pub vuln: Vec1,
}

pub struct ForwardCache {
    pub backbone: BackboneOut,
    pub heads: HeadsOut,
}

impl ForwardCache {
    /// Smallest rectifier pre-activation magnitude across the whole pass;
    /// gradient tests resample inputs when this is under the kink
    /// tolerance.
    pub fn min_abs_pre(&self) -> f64 {
        let mlp_min = |c: &MlpCache| {
            c.pre1
                .iter()
                .fold(f64::INFINITY, |m, v| m.min(v.abs()))
        };
        self.backbone
            .sage_embed
            .min_abs_pre()
            .min(self.backbone.pool.sage.min_abs_pre())
            .min(self.heads.cvp.sage.min_abs_pre())
            .min(mlp_min(&self.heads.rumor_cache))
            .min(mlp_min(&self.heads.vir_cache))
            .min(mlp_min(&self.heads.vuln_cache))
    }
}

pub fn forward_backbone(
    prepared: &PreparedEvent,
    params: &ModelParams,
    mode: DirectionMode,
    masks: Option<&DropoutMasks>,
) -> BackboneOut {
    let bb = &params.backbone;
    let x_p = embed_posts_from(&prepared.content, &prepared.tau, &bb.time_w, &bb.time_b);
    let (x_u1_raw, att) = cross_attention(&prepared.x_u0, &x_p, &bb.w_q, &bb.w_k, &bb.w_v);
    let x_u1 = masked(&x_u1_raw, masks.map(|m| &m.m1));
    let (x_u2_raw, sage_embed) =
        sage_layer(&x_u1, &prepared.graph, &bb.sage_embed, mode, Activation::Relu);
    let x_u2 = masked(&x_u2_raw, masks.map(|m| &m.m2));
    let (pooled, pool) = diffpool(&x_u2, &prepared.graph, &bb.sage_assign, mode);
    let g_row = readout_sum(&pooled.x_c).insert_axis(Axis(0));
    BackboneOut {
        x_p,
        att,
        x_u1,
        sage_embed,
        x_u2,
        pooled,
        pool,
        g_row,
    }
}

pub struct CvpCache {
    pub x_uc: Mat,
    pub x_u3: Mat,
    pub sage: SageCache,
}

/// Community-aware refinement: mix community embeddings back to nodes,
/// concatenate, aggregate once more.
pub fn cvp_refine(
    x_u2: &Mat,
    c: &Mat,
    x_c: &Mat,
    graph: &crate::data::UserInteractionGraph,
    params: &SageParams,
    mode: DirectionMode,
) -> (Mat, CvpCache) {
    let x_uc = c.dot(x_c);
    let x_u3 = hcat(x_u2, &x_uc);
    let (x_u4, sage) = sage_layer(&x_u3, graph, params, mode, Activation::Relu);
    (x_u4, CvpCache { x_uc, x_u3, sage })
}

pub fn forward_heads(
    prepared: &PreparedEvent,
    heads: &HeadParams,
    backbone: &BackboneOut,
    mode: DirectionMode,
    masks: Option<&DropoutMasks>,
) -> (Predictions, HeadsOut) {
    let (rumor_out, rumor_cache) = heads.rumor.forward(&backbone.g_row);
    let (vir_out, vir_cache) = heads.virality.forward(&backbone.g_row);
    let (x_u4_raw, cvp) = cvp_refine(
        &backbone.x_u2,
        &backbone.pooled.c,
        &backbone.pooled.x_c,
        &prepared.graph,
        &heads.cvp,
        mode,
    );
    let x_u4 = masked(&x_u4_raw, masks.map(|m| &m.m4));
    let (vuln_pre, vuln_cache) = heads.vuln.forward(&x_u4);
    let vuln = vuln_pre.column(0).mapv(sigmoid);
    let predictions = Predictions {
        rumor_logits: rumor_out.row(0).to_owned(),
        virality: vir_out[[0, 0]],
        vulnerability: vuln.clone(),
    };
    (
        predictions,
        HeadsOut {
            rumor_cache,
            vir_cache,
            cvp,
            x_u4,
            vuln_cache,
            vuln,
        },
    )
}

/// Full forward pass for one prepared event. Pass `masks` only while
/// training; None disables dropout.
pub fn forward(
    prepared: &PreparedEvent,
    params: &ModelParams,
    mode: DirectionMode,
    masks: Option<&DropoutMasks>,
) -> (Predictions, ForwardCache) {
    let backbone = forward_backbone(prepared, params, mode, masks);
    let (predictions, heads) = forward_heads(prepared, &params.heads, &backbone, mode, masks);
    (
        predictions,
        ForwardCache { backbone, heads },
    )
}

/// Inference helper: graph-level heads on a readout vector.
pub fn predict_graph_heads(g: &Vec1, heads: &HeadParams) -> (Vec1, f64) {
    let row = g.clone().insert_axis(Axis(0));
    let (logits, _) = heads.rumor.forward(&row);
    let (vir, _) = heads.virality.forward(&row);
    (logits.row(0).to_owned(), vir[[0, 0]])
}

/// Inference helper: vulnerability scores from refined node rows.
pub fn predict_vulnerability(x_u4: &Mat, heads: &HeadParams) -> Vec1 {
    let (pre, _) = heads.vuln.forward(x_u4);
    pre.column(0).mapv(sigmoid)
}

/// Gradients of one head stage.
pub struct HeadGrads {
    pub rumor: MlpGrads,
    pub virality: MlpGrads,
    pub cvp: SageGrads,
    pub vuln: MlpGrads,
}

/// Gradient flowing from the heads into the shared stage.
pub struct HeadBoundary {
    /// d loss / d readout row, 1×d.
    pub d_g: Mat,
    /// Contribution to the community embeddings from the refinement path.
    pub d_x_c: Mat,
    /// Contribution to the assignment matrix from the refinement path.
    pub d_c: Mat,
    /// Contribution to the (post-dropout) node embeddings from the
    /// refinement path.
    pub d_x_u2: Mat,
}

/// Backward through the heads only. Upstream seeds are gradients with
/// respect to the three predictions; `d_vuln` is taken against the
/// sigmoid output and chained through it here. `pooled` must be the same
/// pooling the heads consumed in the forward pass.
pub fn backward_heads(
    heads: &HeadParams,
    pooled: &PooledGraph,
    out: &HeadsOut,
    d_rumor_logits: &Vec1,
    d_virality: f64,
    d_vuln: &Vec1,
    masks: Option<&DropoutMasks>,
) -> (HeadGrads, HeadBoundary) {
    let d = out.cvp.x_uc.ncols();

    let n = out.vuln.len();
    let mut d_vuln_pre = Mat::zeros((n, 1));
    for i in 0..n {
        let v = out.vuln[i];
        d_vuln_pre[[i, 0]] = d_vuln[i] * v * (1.0 - v);
    }
    let (vuln_grads, d_x_u4) = heads.vuln.backward(&out.vuln_cache, &d_vuln_pre);
    let d_x_u4_raw = masked(&d_x_u4, masks.map(|m| &m.m4));
    let cvp_grads = sage_layer_backward(&heads.cvp, &out.cvp.sage, &d_x_u4_raw);
    let d_x_u2 = cvp_grads.d_x.slice(ndarray::s![.., ..d]).to_owned();
    let d_x_uc = cvp_grads.d_x.slice(ndarray::s![.., d..]).to_owned();
    // X_uc = C·X_c: dC = dX_uc·X_cᵀ, dX_c = Cᵀ·dX_uc.
    let d_c = d_x_uc.dot(&pooled.x_c.t());
    let d_x_c = pooled.c.t().dot(&d_x_uc);

    let d_rumor_row = d_rumor_logits.clone().insert_axis(Axis(0));
    let (rumor_grads, d_g_r) = heads.rumor.backward(&out.rumor_cache, &d_rumor_row);
    let d_vir_row = Mat::from_elem((1, 1), d_virality);
    let (vir_grads, d_g_v) = heads.virality.backward(&out.vir_cache, &d_vir_row);

    (
        HeadGrads {
            rumor: rumor_grads,
            virality: vir_grads,
            cvp: cvp_grads,
            vuln: vuln_grads,
        },
        HeadBoundary {
            d_g: d_g_r + d_g_v,
            d_x_c,
            d_c,
            d_x_u2,
        },
    )
}

pub struct BackboneGrads {
    pub time_w: Vec1,
    pub time_b: Vec1,
    pub w_q: Mat,
    pub w_k: Mat,
    pub w_v: Mat,
    pub sage_embed: SageGrads,
    pub sage_assign: SageGrads,
}

/// Backward through the shared stage given the head boundary.
pub fn backward_backbone(
    prepared: &PreparedEvent,
    params: &ModelParams,
    mode: DirectionMode,
    bb: &BackboneOut,
    boundary: &HeadBoundary,
    masks: Option<&DropoutMasks>,
    d_c_aux: Option<&Mat>,
) -> BackboneGrads {
    let _ = mode;
    let p = &params.backbone;
    let k = bb.pooled.c.ncols();

    // Readout: g_j = Σ_a X_c[a, j], so every X_c row receives d_g.
    let mut d_x_c = Mat::zeros(bb.pooled.x_c.raw_dim());
    for mut row in d_x_c.rows_mut() {
        row.assign(&boundary.d_g.row(0));
    }
    d_x_c += &boundary.d_x_c;

    let mut d_c_extra = boundary.d_c.clone();
    if let Some(aux) = d_c_aux {
        d_c_extra += aux;
    }
    let d_a_c = Mat::zeros((k, k));
    let pool_grads = diffpool_backward(
        &bb.x_u2,
        &prepared.graph,
        &bb.pooled,
        &bb.pool,
        &p.sage_assign,
        &d_x_c,
        &d_a_c,
        Some(&d_c_extra),
    );
    let d_x_u2 = pool_grads.d_x + &boundary.d_x_u2;
    let d_x_u2_raw = masked(&d_x_u2, masks.map(|m| &m.m2));
    let embed_grads = sage_layer_backward(&p.sage_embed, &bb.sage_embed, &d_x_u2_raw);
    let d_x_u1_raw = masked(&embed_grads.d_x, masks.map(|m| &m.m1));
    let att_grads = cross_attention_backward(
        &prepared.x_u0,
        &bb.x_p,
        &p.w_q,
        &p.w_k,
        &p.w_v,
        &bb.att,
        &d_x_u1_raw,
    );
    let (time_w, time_b) = embed_posts_backward(&prepared.tau, &att_grads.d_xp);

    BackboneGrads {
        time_w,
        time_b,
        w_q: att_grads.d_wq,
        w_k: att_grads.d_wk,
        w_v: att_grads.d_wv,
        sage_embed: embed_grads,
        sage_assign: pool_grads.d_assign,
    }
}

fn add_sage(dst: &mut SageParams, src: &SageGrads) {
    dst.w += &src.d_w;
    if let (Some(d), Some(s)) = (dst.w_rev.as_mut(), src.d_w_rev.as_ref()) {
        *d += s;
    }
    if let (Some(d), Some(s)) = (dst.w_proj.as_mut(), src.d_w_proj.as_ref()) {
        *d += s;
    }
}

fn add_mlp(dst: &mut Mlp, src: &MlpGrads) {
    dst.w1 += &src.d_w1;
    dst.b1 += &src.d_b1;
    dst.w2 += &src.d_w2;
    dst.b2 += &src.d_b2;
}

/// Accumulates head grads into a gradient container.
pub fn accumulate_head_grads(acc: &mut ModelParams, g: &HeadGrads) {
    add_mlp(&mut acc.heads.rumor, &g.rumor);
    add_mlp(&mut acc.heads.virality, &g.virality);
    add_sage(&mut acc.heads.cvp, &g.cvp);
    add_mlp(&mut acc.heads.vuln, &g.vuln);
}

/// Accumulates backbone grads into a gradient container.
pub fn accumulate_backbone_grads(acc: &mut ModelParams, g: &BackboneGrads) {
    acc.backbone.time_w += &g.time_w;
    acc.backbone.time_b += &g.time_b;
    acc.backbone.w_q += &g.w_q;
    acc.backbone.w_k += &g.w_k;
    acc.backbone.w_v += &g.w_v;
    add_sage(&mut acc.backbone.sage_embed, &g.sage_embed);
    add_sage(&mut acc.backbone.sage_assign, &g.sage_assign);
}

/// Full backward pass; returns gradients in a parameter-shaped container.
#[allow(clippy::too_many_arguments)]
pub fn backward(
    prepared: &PreparedEvent,
    params: &ModelParams,
    mode: DirectionMode,
    cache: &ForwardCache,
    d_rumor_logits: &Vec1,
    d_virality: f64,
    d_vuln: &Vec1,
    masks: Option<&DropoutMasks>,
    d_c_aux: Option<&Mat>,
) -> ModelParams {
    let (head_grads, boundary) = backward_heads(
        &params.heads,
        &cache.backbone.pooled,
        &cache.heads,
        d_rumor_logits,
        d_virality,
        d_vuln,
        masks,
    );
    let bb_grads = backward_backbone(
        prepared,
        params,
        mode,
        &cache.backbone,
        &boundary,
        masks,
        d_c_aux,
    );
    let mut g = params.zeros_like();
    accumulate_head_grads(&mut g, &head_grads);
    accumulate_backbone_grads(&mut g, &bb_grads);
    g
}

impl HeadParams {
    /// self += s · grads, used by the meta inner step.
    pub fn add_scaled_grads(&mut self, g: &HeadGrads, s: f64) {
        let scale_mlp = |dst: &mut Mlp, src: &MlpGrads| {
            dst.w1.scaled_add(s, &src.d_w1);
            dst.b1.scaled_add(s, &src.d_b1);
            dst.w2.scaled_add(s, &src.d_w2);
            dst.b2.scaled_add(s, &src.d_b2);
        };
        scale_mlp(&mut self.rumor, &g.rumor);
        scale_mlp(&mut self.virality, &g.virality);
        scale_mlp(&mut self.vuln, &g.vuln);
        self.cvp.w.scaled_add(s, &g.cvp.d_w);
        if let (Some(d), Some(src)) = (self.cvp.w_rev.as_mut(), g.cvp.d_w_rev.as_ref()) {
            d.scaled_add(s, src);
        }
        if let (Some(d), Some(src)) = (self.cvp.w_proj.as_mut(), g.cvp.d_w_proj.as_ref()) {
            d.scaled_add(s, src);
        }
    }
}
