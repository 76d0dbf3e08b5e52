//! Training strategies: single-task, basic joint, gradient-norm balanced
//! joint, and meta-training with per-task inner head updates.
//!
//! All strategies share one skeleton: prepared events are shuffled per
//! epoch, batches of events run forward/backward independently against
//! read-only parameters (parallelizable), gradients are averaged in input
//! order, and one Adam step is applied. The [`Trainer`] exposes that loop
//! step by step so training can be checkpointed and resumed bit-exactly
//! mid-epoch.

mod adam;
mod gradnorm;
mod losses;

pub use adam::Adam;
pub use gradnorm::{gradnorm_update, GradNormError};
pub use losses::{compute_task_losses, loss_seeds, LossBundle};

use crate::data::{LabelSet, PropagationEvent};
use crate::encoder::{pool_aux_backward, pool_aux_losses, DirectionMode};
use crate::eval::{evaluate_prepared, MetricsReport};
use crate::linalg::{fro_norm, Mat};
use crate::model::{
    accumulate_backbone_grads, accumulate_head_grads, backward, backward_backbone, backward_heads,
    forward, forward_backbone, forward_heads, prepare_event, BackboneOut, DropoutMasks,
    ModelConfig, ModelParams, PreparedEvent,
};
use crate::par::ordered_map;
use crate::pretrain::UserEmbeddingTable;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

/// Keep per-epoch parameter snapshots for joint best-checkpoint selection
/// as long as epochs × n_params stays under this budget (~256 MB of f64);
/// larger runs deterministically replay to the winning epoch instead.
const SNAPSHOT_FLOAT_CAP: usize = 32_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    SingleRumor,
    SingleVirality,
    SingleVuln,
    Basic,
    Gradnorm,
    Meta,
}

impl Strategy {
    /// Which task losses this strategy trains before `loss_mask` is applied.
    pub fn base_mask(self) -> [bool; 3] {
        match self {
            Strategy::SingleRumor => [true, false, false],
            Strategy::SingleVirality => [false, true, false],
            Strategy::SingleVuln => [false, false, true],
            _ => [true, true, true],
        }
    }

    pub fn is_joint(self) -> bool {
        matches!(self, Strategy::Basic | Strategy::Gradnorm | Strategy::Meta)
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::SingleRumor => "single_rumor",
            Strategy::SingleVirality => "single_virality",
            Strategy::SingleVuln => "single_vuln",
            Strategy::Basic => "basic",
            Strategy::Gradnorm => "gradnorm",
            Strategy::Meta => "meta",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "single_rumor" => Ok(Strategy::SingleRumor),
            "single_virality" => Ok(Strategy::SingleVirality),
            "single_vuln" => Ok(Strategy::SingleVuln),
            "basic" => Ok(Strategy::Basic),
            "gradnorm" => Ok(Strategy::Gradnorm),
            "meta" => Ok(Strategy::Meta),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Step size of the per-task inner head update (meta only).
    pub inner_lr: f64,
    pub gradnorm_alpha: f64,
    pub gradnorm_weight_lr: f64,
    /// Observation fraction events are truncated to for training and
    /// per-epoch validation.
    pub obs_fraction: f64,
    pub seed: u64,
    /// Per-task loss switches on top of the strategy's own mask, in task
    /// order [rumor, virality, vulnerability].
    pub loss_mask: [bool; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            strategy: Strategy::Meta,
            epochs: 30,
            batch_size: 8,
            lr: 5e-3,
            inner_lr: 5e-3,
            gradnorm_alpha: 1.5,
            gradnorm_weight_lr: 2.5e-2,
            obs_fraction: 0.8,
            seed: 0,
            loss_mask: [true; 3],
        }
    }
}

impl TrainConfig {
    pub fn effective_mask(&self) -> [bool; 3] {
        let base = self.strategy.base_mask();
        [
            base[0] && self.loss_mask[0],
            base[1] && self.loss_mask[1],
            base[2] && self.loss_mask[2],
        ]
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.effective_mask().iter().all(|&m| !m) {
            return Err(TrainError::InvalidConfig(
                "every task loss is disabled".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.obs_fraction) {
            return Err(TrainError::InvalidConfig(
                "obs_fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, step {step} (rumor {rumor}, virality {virality}, vuln {vuln}, aux {aux})")]
    NonFiniteLoss {
        epoch: usize,
        step: u64,
        rumor: f64,
        virality: f64,
        vuln: f64,
        aux: f64,
    },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training split is empty")]
    EmptySplit,
    #[error("resume state does not fit this corpus/config: {0}")]
    StateMismatch(String),
}

/// What one optimizer step reported.
#[derive(Debug, Clone)]
pub struct StepStats {
    /// Batch-mean task losses; for meta these are the outer losses after
    /// the inner head update.
    pub losses: LossBundle,
    /// Weighted pooling regularizer, 0 when disabled.
    pub aux_loss: f64,
    /// Task weights after this step (gradnorm strategy only).
    pub gradnorm_weights: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
struct GradNormState {
    weights: [f64; 3],
    initial: Option<[f64; 3]>,
    /// Set when the initial losses were degenerate; weights stay equal.
    frozen: bool,
}

/// Everything needed to continue training bit-exactly from a boundary
/// between steps. The prepared corpus itself is not part of the state;
/// resuming against a different corpus or config is rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub adam_t: u64,
    pub gradnorm_weights: [f64; 3],
    pub gradnorm_initial: Option<[f64; 3]>,
    pub gradnorm_frozen: bool,
    pub rng_seed: [u8; 32],
    pub rng_stream: u64,
    pub rng_word_pos: u128,
    pub epoch: u64,
    pub cursor: u64,
    pub order: Vec<u32>,
}

/// Step-driven training loop over one prepared corpus.
pub struct Trainer<'a> {
    prepared: &'a [PreparedEvent],
    model_config: ModelConfig,
    config: TrainConfig,
    mask: [bool; 3],
    params: ModelParams,
    adam: Adam,
    rng: ChaCha8Rng,
    epoch: usize,
    cursor: usize,
    order: Vec<u32>,
    gradnorm: GradNormState,
}

fn mask01(mask: [bool; 3]) -> [f64; 3] {
    [
        if mask[0] { 1.0 } else { 0.0 },
        if mask[1] { 1.0 } else { 0.0 },
        if mask[2] { 1.0 } else { 0.0 },
    ]
}

/// Batch-mean losses, pooling regularizer, and parameter gradients of the
/// weighted objective. Events run independently; the reduction is
/// sequential in input order.
fn batch_grads(
    params: &ModelParams,
    mode: DirectionMode,
    aux_weight: f64,
    batch: &[(&PreparedEvent, Option<&DropoutMasks>)],
    weights: [f64; 3],
) -> (LossBundle, f64, ModelParams) {
    let scale = 1.0 / batch.len() as f64;
    let per_event = ordered_map(batch, None, |&(prep, masks)| {
        let (preds, cache) = forward(prep, params, mode, masks);
        let bundle = compute_task_losses(&preds, prep);
        let (d_logits, d_virality, d_vuln) = loss_seeds(&preds, prep, weights);
        let (aux, d_c_aux) = aux_terms(aux_weight, &cache.backbone, prep);
        let grads = backward(
            prep,
            params,
            mode,
            &cache,
            &d_logits,
            d_virality,
            &d_vuln,
            masks,
            d_c_aux.as_ref(),
        );
        (bundle, aux, grads)
    });

    let mut bundle = LossBundle::zeros();
    let mut aux_total = 0.0;
    let mut grads = params.zeros_like();
    for (b, aux, g) in &per_event {
        bundle.add(b);
        aux_total += aux;
        grads.add_scaled(g, scale);
    }
    bundle.scale(scale);
    (bundle, aux_total * scale, grads)
}

/// Weighted pooling regularizer and its assignment-matrix gradient.
fn aux_terms(
    aux_weight: f64,
    bb: &BackboneOut,
    prep: &PreparedEvent,
) -> (f64, Option<Mat>) {
    if aux_weight == 0.0 {
        return (0.0, None);
    }
    let (link, entropy) = pool_aux_losses(&bb.pooled.c, &prep.graph.adjacency);
    let d_c = pool_aux_backward(&bb.pooled.c, &prep.graph.adjacency, aux_weight);
    (aux_weight * (link + entropy), Some(d_c))
}

impl<'a> Trainer<'a> {
    pub fn new(
        prepared: &'a [PreparedEvent],
        model_config: &ModelConfig,
        config: &TrainConfig,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        if prepared.is_empty() {
            return Err(TrainError::EmptySplit);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = ModelParams::init(model_config, &mut rng);
        let adam = Adam::new(config.lr, params.n_params());
        let mask = config.effective_mask();
        let mut trainer = Trainer {
            prepared,
            model_config: model_config.clone(),
            config: config.clone(),
            mask,
            params,
            adam,
            rng,
            epoch: 0,
            cursor: 0,
            order: Vec::new(),
            gradnorm: GradNormState {
                weights: mask01(mask),
                initial: None,
                frozen: false,
            },
        };
        trainer.order = trainer.draw_order();
        Ok(trainer)
    }

    /// Rebuild a trainer mid-run. `prepared` must be the same corpus (same
    /// events, same order, same observation fraction) the state was
    /// captured against.
    pub fn resume(
        prepared: &'a [PreparedEvent],
        model_config: &ModelConfig,
        config: &TrainConfig,
        state: &TrainState,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        if prepared.is_empty() {
            return Err(TrainError::EmptySplit);
        }
        let mut rng = ChaCha8Rng::from_seed(state.rng_seed);
        rng.set_stream(state.rng_stream);
        rng.set_word_pos(state.rng_word_pos);

        let mut probe = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ModelParams::init(model_config, &mut probe);
        if params.n_params() != state.params.len() {
            return Err(TrainError::StateMismatch(format!(
                "{} parameters expected, state holds {}",
                params.n_params(),
                state.params.len()
            )));
        }
        if state.order.len() != prepared.len()
            || state.cursor as usize > state.order.len()
            || state.order.iter().any(|&i| i as usize >= prepared.len())
        {
            return Err(TrainError::StateMismatch(
                "event order does not index this corpus".into(),
            ));
        }
        params.load_flat(&state.params);
        let mut adam = Adam::new(config.lr, state.params.len());
        adam.m.copy_from_slice(&state.adam_m);
        adam.v.copy_from_slice(&state.adam_v);
        adam.t = state.adam_t;

        Ok(Trainer {
            prepared,
            model_config: model_config.clone(),
            config: config.clone(),
            mask: config.effective_mask(),
            params,
            adam,
            rng,
            epoch: state.epoch as usize,
            cursor: state.cursor as usize,
            order: state.order.clone(),
            gradnorm: GradNormState {
                weights: state.gradnorm_weights,
                initial: state.gradnorm_initial,
                frozen: state.gradnorm_frozen,
            },
        })
    }

    pub fn state(&self) -> TrainState {
        TrainState {
            params: self.params.flat(),
            adam_m: self.adam.m.clone(),
            adam_v: self.adam.v.clone(),
            adam_t: self.adam.t,
            gradnorm_weights: self.gradnorm.weights,
            gradnorm_initial: self.gradnorm.initial,
            gradnorm_frozen: self.gradnorm.frozen,
            rng_seed: self.rng.get_seed(),
            rng_stream: self.rng.get_stream(),
            rng_word_pos: self.rng.get_word_pos(),
            epoch: self.epoch as u64,
            cursor: self.cursor as u64,
            order: self.order.clone(),
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn epoch_done(&self) -> bool {
        self.cursor >= self.order.len()
    }

    /// Start the next epoch: bump the counter and reshuffle.
    pub fn advance_epoch(&mut self) {
        self.epoch += 1;
        self.cursor = 0;
        self.order = self.draw_order();
    }

    fn draw_order(&mut self) -> Vec<u32> {
        let mut order: Vec<u32> = (0..self.prepared.len() as u32).collect();
        order.shuffle(&mut self.rng);
        order
    }

    /// One optimizer step on the next batch of the current epoch.
    pub fn step(&mut self) -> Result<StepStats, TrainError> {
        assert!(!self.epoch_done(), "epoch exhausted; call advance_epoch");
        let end = (self.cursor + self.config.batch_size).min(self.order.len());
        let batch: Vec<&PreparedEvent> = self.order[self.cursor..end]
            .iter()
            .map(|&i| &self.prepared[i as usize])
            .collect();

        // Masks are drawn sequentially here so the parallel section below
        // never touches the rng.
        let rate = self.model_config.dropout;
        let masks: Vec<Option<DropoutMasks>> = batch
            .iter()
            .map(|e| {
                (rate > 0.0).then(|| {
                    DropoutMasks::draw(e.n_users(), self.model_config.dim, rate, &mut self.rng)
                })
            })
            .collect();
        let items: Vec<(&PreparedEvent, Option<&DropoutMasks>)> = batch
            .iter()
            .zip(&masks)
            .map(|(e, m)| (*e, m.as_ref()))
            .collect();

        let stats = match self.config.strategy {
            Strategy::Meta => self.meta_step(&items)?,
            Strategy::Gradnorm => self.gradnorm_step(&items)?,
            _ => self.basic_step(&items)?,
        };
        self.cursor = end;
        Ok(stats)
    }

    fn check_finite(&self, bundle: &LossBundle, aux: f64) -> Result<(), TrainError> {
        if bundle.all_finite() && aux.is_finite() {
            Ok(())
        } else {
            Err(TrainError::NonFiniteLoss {
                epoch: self.epoch,
                step: self.adam.t,
                rumor: bundle.rumor,
                virality: bundle.virality,
                vuln: bundle.vuln,
                aux,
            })
        }
    }

    fn apply(&mut self, grads: &ModelParams) {
        let mut flat = self.params.flat();
        self.adam.step(&mut flat, &grads.flat());
        self.params.load_flat(&flat);
    }

    fn basic_step(
        &mut self,
        items: &[(&PreparedEvent, Option<&DropoutMasks>)],
    ) -> Result<StepStats, TrainError> {
        let (bundle, aux, grads) = batch_grads(
            &self.params,
            self.model_config.direction,
            self.model_config.aux_pool_weight,
            items,
            mask01(self.mask),
        );
        self.check_finite(&bundle, aux)?;
        self.apply(&grads);
        Ok(StepStats {
            losses: bundle,
            aux_loss: aux,
            gradnorm_weights: None,
        })
    }

    fn gradnorm_step(
        &mut self,
        items: &[(&PreparedEvent, Option<&DropoutMasks>)],
    ) -> Result<StepStats, TrainError> {
        let mode = self.model_config.direction;
        let aux_weight = self.model_config.aux_pool_weight;
        let params = &self.params;
        let mask = self.mask;
        let scale = 1.0 / items.len() as f64;

        // Per-task gradients stay separate so the shared-layer norms g_k
        // are those of the unweighted losses; the combined gradient is
        // reassembled from them by linearity.
        type EventOut = (LossBundle, f64, [Option<ModelParams>; 3], Option<ModelParams>);
        let per_event: Vec<EventOut> = ordered_map(items, None, |&(prep, masks)| {
            let (preds, cache) = forward(prep, params, mode, masks);
            let bundle = compute_task_losses(&preds, prep);
            let task_grads = std::array::from_fn(|k| {
                if !mask[k] {
                    return None;
                }
                let mut w = [0.0; 3];
                w[k] = 1.0;
                let (d_logits, d_virality, d_vuln) = loss_seeds(&preds, prep, w);
                Some(backward(
                    prep, params, mode, &cache, &d_logits, d_virality, &d_vuln, masks, None,
                ))
            });
            let (aux, d_c_aux) = aux_terms(aux_weight, &cache.backbone, prep);
            let aux_grads = d_c_aux.map(|d_c| {
                let zero2 = crate::linalg::Vec1::zeros(2);
                let zero_n = crate::linalg::Vec1::zeros(prep.n_users());
                backward(
                    prep, params, mode, &cache, &zero2, 0.0, &zero_n, masks, Some(&d_c),
                )
            });
            (bundle, aux, task_grads, aux_grads)
        });

        let mut bundle = LossBundle::zeros();
        let mut aux_total = 0.0;
        let mut task_acc: [Option<ModelParams>; 3] = std::array::from_fn(|_| None);
        let mut combined = self.params.zeros_like();
        for (b, aux, task_grads, aux_grads) in &per_event {
            bundle.add(b);
            aux_total += aux;
            for k in 0..3 {
                if let Some(g) = &task_grads[k] {
                    task_acc[k]
                        .get_or_insert_with(|| self.params.zeros_like())
                        .add_scaled(g, scale);
                }
            }
            if let Some(g) = aux_grads {
                combined.add_scaled(g, scale);
            }
        }
        bundle.scale(scale);
        let aux = aux_total * scale;
        self.check_finite(&bundle, aux)?;

        let losses = [bundle.rumor, bundle.virality, bundle.vuln];
        if self.gradnorm.initial.is_none() {
            self.gradnorm.initial = Some(losses);
            if (0..3).any(|k| self.mask[k] && losses[k] == 0.0) {
                // Relative progress is undefined from a zero start; train
                // the whole run with equal weights instead.
                self.gradnorm.frozen = true;
                self.gradnorm.weights = mask01(self.mask);
            }
        }

        let weights = self.gradnorm.weights;
        let mut norms = [0.0; 3];
        for k in 0..3 {
            if let Some(g) = &task_acc[k] {
                norms[k] = fro_norm(&g.backbone.sage_embed.w);
                combined.add_scaled(g, weights[k]);
            }
        }
        self.apply(&combined);

        if !self.gradnorm.frozen {
            let initial = self.gradnorm.initial.unwrap();
            match gradnorm_update(
                losses,
                initial,
                weights,
                norms,
                self.mask,
                self.config.gradnorm_alpha,
                self.config.gradnorm_weight_lr,
            ) {
                Ok(updated) => self.gradnorm.weights = updated,
                Err(GradNormError::DegenerateInitialLoss) => {
                    self.gradnorm.frozen = true;
                    self.gradnorm.weights = mask01(self.mask);
                }
            }
        }

        Ok(StepStats {
            losses: bundle,
            aux_loss: aux,
            gradnorm_weights: Some(self.gradnorm.weights),
        })
    }

    fn meta_step(
        &mut self,
        items: &[(&PreparedEvent, Option<&DropoutMasks>)],
    ) -> Result<StepStats, TrainError> {
        let mode = self.model_config.direction;
        let aux_weight = self.model_config.aux_pool_weight;
        let params = &self.params;
        let weights = mask01(self.mask);
        let scale = 1.0 / items.len() as f64;

        // Inner: one shared forward per event, head-only gradients of each
        // task loss. The three heads are parameter-disjoint, so a single
        // head backward carries every per-task inner gradient at once.
        let stage1 = ordered_map(items, None, |&(prep, masks)| {
            let bb = forward_backbone(prep, params, mode, masks);
            let (preds, heads_out) = forward_heads(prep, &params.heads, &bb, mode, masks);
            let (d_logits, d_virality, d_vuln) = loss_seeds(&preds, prep, weights);
            let (head_grads, _) = backward_heads(
                &params.heads,
                &bb.pooled,
                &heads_out,
                &d_logits,
                d_virality,
                &d_vuln,
                masks,
            );
            (bb, head_grads)
        });

        let mut adapted = self.params.heads.clone();
        for (_, head_grads) in &stage1 {
            adapted.add_scaled_grads(head_grads, -self.config.inner_lr * scale);
        }

        // Outer: re-run only the heads at the adapted parameters on the
        // cached backbone activations (masks included), then backpropagate
        // the whole model. First-order: the adapted heads' gradients are
        // applied to the original head parameters.
        struct Stage2 {
            bundle: LossBundle,
            aux: f64,
            grads: ModelParams,
        }
        let stage2_items: Vec<(&PreparedEvent, Option<&DropoutMasks>, &BackboneOut)> = items
            .iter()
            .zip(&stage1)
            .map(|(&(prep, masks), (bb, _))| (prep, masks, bb))
            .collect();
        let stage2: Vec<Stage2> = ordered_map(&stage2_items, None, |&(prep, masks, bb)| {
            let (preds, heads_out) = forward_heads(prep, &adapted, bb, mode, masks);
            let bundle = compute_task_losses(&preds, prep);
            let (d_logits, d_virality, d_vuln) = loss_seeds(&preds, prep, weights);
            let (head_grads, boundary) = backward_heads(
                &adapted,
                &bb.pooled,
                &heads_out,
                &d_logits,
                d_virality,
                &d_vuln,
                masks,
            );
            let (aux, d_c_aux) = aux_terms(aux_weight, bb, prep);
            let bb_grads =
                backward_backbone(prep, params, mode, bb, &boundary, masks, d_c_aux.as_ref());
            let mut grads = params.zeros_like();
            accumulate_head_grads(&mut grads, &head_grads);
            accumulate_backbone_grads(&mut grads, &bb_grads);
            Stage2 { bundle, aux, grads }
        });

        let mut bundle = LossBundle::zeros();
        let mut aux_total = 0.0;
        let mut grads = self.params.zeros_like();
        for s in &stage2 {
            bundle.add(&s.bundle);
            aux_total += s.aux;
            grads.add_scaled(&s.grads, scale);
        }
        bundle.scale(scale);
        let aux = aux_total * scale;
        self.check_finite(&bundle, aux)?;
        self.apply(&grads);
        Ok(StepStats {
            losses: bundle,
            aux_loss: aux,
            gradnorm_weights: None,
        })
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-task losses over the epoch's steps (outer losses for meta).
    pub train_rumor_loss: f64,
    pub train_virality_loss: f64,
    pub train_vuln_loss: f64,
    pub train_aux_loss: f64,
    pub gradnorm_weights: Option<[f64; 3]>,
    pub validation: Option<MetricsReport>,
    pub wall_secs: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Best checkpoint under the strategy's validation score; the final
    /// parameters when no validation basis exists.
    pub params: ModelParams,
    pub final_params: ModelParams,
    pub best_epoch: Option<usize>,
    pub log: Vec<EpochRecord>,
}

/// Prepare both splits at `config.obs_fraction` and run the epoch loop.
/// `val_events` may be empty; validation is skipped then.
pub fn train(
    train_events: &[&PropagationEvent],
    val_events: &[&PropagationEvent],
    labels: &LabelSet,
    user_table: &UserEmbeddingTable,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if train_events.is_empty() {
        return Err(TrainError::EmptySplit);
    }
    let encoder = model_config.text_encoder();
    let prepared = ordered_map(train_events, None, |e| {
        prepare_event(e, config.obs_fraction, &encoder, user_table, labels)
    });
    let val_prepared = ordered_map(val_events, None, |e| {
        prepare_event(e, config.obs_fraction, &encoder, user_table, labels)
    });
    train_prepared(&prepared, &val_prepared, model_config, config)
}

/// The epoch loop over already-prepared events.
pub fn train_prepared(
    prepared: &[PreparedEvent],
    val_prepared: &[PreparedEvent],
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    run_training(prepared, val_prepared, model_config, config, SNAPSHOT_FLOAT_CAP)
}

fn run_training(
    prepared: &[PreparedEvent],
    val_prepared: &[PreparedEvent],
    model_config: &ModelConfig,
    config: &TrainConfig,
    snapshot_cap: usize,
) -> Result<TrainOutcome, TrainError> {
    let mut trainer = Trainer::new(prepared, model_config, config)?;
    if config.epochs == 0 {
        let params = trainer.params.clone();
        return Ok(TrainOutcome {
            params: params.clone(),
            final_params: params,
            best_epoch: None,
            log: Vec::new(),
        });
    }

    let store_snapshots = config.strategy.is_joint()
        && config
            .epochs
            .saturating_mul(trainer.params.n_params())
            <= snapshot_cap;
    let mut snapshots: Vec<Vec<f64>> = Vec::new();
    let mut best_single: Option<(f64, usize, ModelParams)> = None;
    let mut joint_inputs: Vec<JointScore> = Vec::new();
    let mut log = Vec::new();

    for _ in 0..config.epochs {
        let started = Instant::now();
        let mut sums = LossBundle::zeros();
        let mut aux_sum = 0.0;
        let mut steps = 0usize;
        let mut weights = None;
        while !trainer.epoch_done() {
            let stats = trainer.step()?;
            sums.add(&stats.losses);
            aux_sum += stats.aux_loss;
            steps += 1;
            if stats.gradnorm_weights.is_some() {
                weights = stats.gradnorm_weights;
            }
        }
        sums.scale(1.0 / steps as f64);

        let validation = if val_prepared.is_empty() {
            None
        } else {
            evaluate_prepared(
                &trainer.params,
                model_config.direction,
                val_prepared,
                "validation",
                config.obs_fraction,
                config.seed,
            )
            .ok()
        };
        let record = EpochRecord {
            epoch: trainer.epoch,
            train_rumor_loss: sums.rumor,
            train_virality_loss: sums.virality,
            train_vuln_loss: sums.vuln,
            train_aux_loss: aux_sum / steps as f64,
            gradnorm_weights: weights,
            validation,
            wall_secs: started.elapsed().as_secs_f64(),
        };

        if config.strategy.is_joint() {
            if let Some(v) = &record.validation {
                joint_inputs.push(JointScore {
                    mac_f1: v.rumor.macro_f1,
                    neg_virality_mse: -v.virality.mse,
                    neg_vuln_mse: v.vulnerability.as_ref().map(|m| -m.mse),
                });
            }
            if store_snapshots {
                snapshots.push(trainer.params.flat());
            }
        } else if let Some(score) = single_score(config.strategy, &record) {
            let improved = best_single.as_ref().map_or(true, |(s, _, _)| score > *s);
            if improved {
                best_single = Some((score, trainer.epoch, trainer.params.clone()));
            }
        }

        log.push(record);
        trainer.advance_epoch();
    }

    let final_params = trainer.params.clone();
    let (params, best_epoch) = if config.strategy.is_joint() {
        match joint_best_epoch(&joint_inputs) {
            None => (final_params.clone(), None),
            Some(e) if e + 1 == config.epochs => (final_params.clone(), Some(e)),
            Some(e) => {
                let flat = if store_snapshots {
                    snapshots[e].clone()
                } else {
                    replay_to_epoch(prepared, model_config, config, e + 1)?
                };
                let mut p = final_params.clone();
                p.load_flat(&flat);
                (p, Some(e))
            }
        }
    } else {
        match best_single {
            Some((_, e, p)) => (p, Some(e)),
            None => (final_params.clone(), None),
        }
    };

    Ok(TrainOutcome {
        params,
        final_params,
        best_epoch,
        log,
    })
}

/// Deterministically retrain up to (and including) epoch `epochs - 1`.
/// Validation never touches the rng, so this reproduces the main run's
/// parameters at that boundary exactly.
fn replay_to_epoch(
    prepared: &[PreparedEvent],
    model_config: &ModelConfig,
    config: &TrainConfig,
    epochs: usize,
) -> Result<Vec<f64>, TrainError> {
    let mut trainer = Trainer::new(prepared, model_config, config)?;
    for _ in 0..epochs {
        while !trainer.epoch_done() {
            trainer.step()?;
        }
        trainer.advance_epoch();
    }
    Ok(trainer.params.flat())
}

/// Validation score a single-task strategy maximizes, per epoch.
fn single_score(strategy: Strategy, record: &EpochRecord) -> Option<f64> {
    match strategy {
        Strategy::SingleRumor => record.validation.as_ref().map(|v| v.rumor.macro_f1),
        Strategy::SingleVirality => record.validation.as_ref().map(|v| -v.virality.mse),
        // Non-overlapping validation splits carry no vulnerability labels,
        // so fall back to the training loss.
        Strategy::SingleVuln => Some(
            record
                .validation
                .as_ref()
                .and_then(|v| v.vulnerability.as_ref())
                .map(|m| -m.mse)
                .unwrap_or(-record.train_vuln_loss),
        ),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy)]
struct JointScore {
    mac_f1: f64,
    neg_virality_mse: f64,
    neg_vuln_mse: Option<f64>,
}

/// Joint-strategy selection: z-score each available metric across epochs,
/// average them per epoch, take the argmax (earliest on ties). A metric
/// with zero variance contributes nothing.
fn joint_best_epoch(scores: &[JointScore]) -> Option<usize> {
    if scores.is_empty() {
        return None;
    }
    let mut series: Vec<Vec<f64>> = vec![
        scores.iter().map(|s| s.mac_f1).collect(),
        scores.iter().map(|s| s.neg_virality_mse).collect(),
    ];
    if scores.iter().all(|s| s.neg_vuln_mse.is_some()) {
        series.push(scores.iter().map(|s| s.neg_vuln_mse.unwrap()).collect());
    }

    let n = scores.len() as f64;
    let mut combined = vec![0.0; scores.len()];
    for values in &series {
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd == 0.0 {
            continue;
        }
        for (c, v) in combined.iter_mut().zip(values) {
            *c += (v - mean) / sd / series.len() as f64;
        }
    }
    let mut best = 0;
    for (e, &s) in combined.iter().enumerate() {
        if s > combined[best] {
            best = e;
        }
    }
    Some(best)
}
