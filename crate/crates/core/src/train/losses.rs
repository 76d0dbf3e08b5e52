//! Per-event task losses and their gradient seeds.
//!
//! The seeds are derivatives of the (unweighted) losses with respect to
//! the three prediction tensors; task weighting and batch averaging are
//! applied by the caller through the `weights` argument.

use crate::linalg::{logsumexp, Vec1};
use crate::model::{Predictions, PreparedEvent};

/// The three per-event task losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBundle {
    /// Cross-entropy of the rumor logits against the event class.
    pub rumor: f64,
    /// Squared error of the virality prediction.
    pub virality: f64,
    /// Mean squared error over vulnerability-labeled users; 0 when the
    /// observed graph contains none.
    pub vuln: f64,
    pub labeled_user_count: usize,
}

impl LossBundle {
    pub fn zeros() -> Self {
        LossBundle {
            rumor: 0.0,
            virality: 0.0,
            vuln: 0.0,
            labeled_user_count: 0,
        }
    }

    pub fn add(&mut self, other: &LossBundle) {
        self.rumor += other.rumor;
        self.virality += other.virality;
        self.vuln += other.vuln;
        self.labeled_user_count += other.labeled_user_count;
    }

    pub fn scale(&mut self, s: f64) {
        self.rumor *= s;
        self.virality *= s;
        self.vuln *= s;
    }

    /// Weighted sum of the three losses.
    pub fn weighted(&self, weights: [f64; 3]) -> f64 {
        weights[0] * self.rumor + weights[1] * self.virality + weights[2] * self.vuln
    }

    pub fn all_finite(&self) -> bool {
        self.rumor.is_finite() && self.virality.is_finite() && self.vuln.is_finite()
    }
}

/// Losses of one event's predictions against its prepared targets.
pub fn compute_task_losses(preds: &Predictions, prepared: &PreparedEvent) -> LossBundle {
    let logits = &preds.rumor_logits;
    let rumor = logsumexp(logits.as_slice().unwrap()) - logits[prepared.class.index()];

    let dv = preds.virality - prepared.virality_target;
    let virality = dv * dv;

    let n = prepared.vuln_labels.len();
    let vuln = if n == 0 {
        0.0
    } else {
        prepared
            .vuln_labels
            .iter()
            .map(|&(node, label)| {
                let d = preds.vulnerability[node] - label;
                d * d
            })
            .sum::<f64>()
            / n as f64
    };

    LossBundle {
        rumor,
        virality,
        vuln,
        labeled_user_count: n,
    }
}

/// Gradient seeds of the weighted loss for one event.
///
/// Returns (d logits, d virality, d vulnerability) where the vulnerability
/// seed is against the sigmoid outputs and is zero at unlabeled users. A
/// weight of 0 produces exactly zero seeds for that task.
pub fn loss_seeds(
    preds: &Predictions,
    prepared: &PreparedEvent,
    weights: [f64; 3],
) -> (Vec1, f64, Vec1) {
    let logits = &preds.rumor_logits;
    let lse = logsumexp(logits.as_slice().unwrap());
    let mut d_logits = Vec1::zeros(2);
    if weights[0] != 0.0 {
        for j in 0..2 {
            let softmax = (logits[j] - lse).exp();
            let onehot = if j == prepared.class.index() { 1.0 } else { 0.0 };
            d_logits[j] = weights[0] * (softmax - onehot);
        }
    }

    let d_virality = weights[1] * 2.0 * (preds.virality - prepared.virality_target);

    let mut d_vuln = Vec1::zeros(preds.vulnerability.len());
    let n = prepared.vuln_labels.len();
    if weights[2] != 0.0 && n > 0 {
        for &(node, label) in &prepared.vuln_labels {
            d_vuln[node] = weights[2] * 2.0 * (preds.vulnerability[node] - label) / n as f64;
        }
    }

    (d_logits, d_virality, d_vuln)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_event, Label, PropagationEvent, RawEventRecord, RawPost};
    use crate::model::{prepare_event, ModelConfig};
    use crate::pretrain::{build_global_user_graph, pretrain_user_embeddings, PretrainConfig};

    fn fake_preds(logits: [f64; 2], virality: f64, vuln: &[f64]) -> Predictions {
        Predictions {
            rumor_logits: Vec1::from(logits.to_vec()),
            virality,
            vulnerability: Vec1::from(vuln.to_vec()),
        }
    }

    fn two_user_event(id: &str, label: Label) -> PropagationEvent {
        parse_event(RawEventRecord {
            event_id: id.to_string(),
            label,
            posts: vec![
                RawPost {
                    post_id: "p0".into(),
                    parent_id: None,
                    user_id: "alice".into(),
                    ts: 0.0,
                    text: "origin claim".into(),
                },
                RawPost {
                    post_id: "p1".into(),
                    parent_id: Some("p0".into()),
                    user_id: "bob".into(),
                    ts: 10.0,
                    text: "reply".into(),
                },
            ],
        })
        .unwrap()
    }

    fn prepared_fixture() -> PreparedEvent {
        // Two events sharing both users so both carry vulnerability labels.
        let corpus = vec![
            two_user_event("e0", Label::Rumor),
            two_user_event("e1", Label::NonRumor),
        ];
        let labels = crate::data::LabelSet::derive(&corpus);
        let graph = build_global_user_graph(&corpus);
        let table = pretrain_user_embeddings(
            &graph,
            &PretrainConfig {
                dim: 4,
                lr: 0.0,
                ..PretrainConfig::default()
            },
            1,
        );
        let config = ModelConfig {
            dim: 4,
            communities: 2,
            ..ModelConfig::default()
        };
        let encoder = config.text_encoder();
        prepare_event(&corpus[0], 1.0, &encoder, &table, &labels)
    }

    #[test]
    fn perfect_predictions_zero_out_regressions() {
        let prep = prepared_fixture();
        let vuln: Vec<f64> = (0..prep.n_users()).map(|_| 0.5).collect();
        let mut preds = fake_preds([0.0, 20.0], prep.virality_target, &vuln);
        for &(node, label) in &prep.vuln_labels {
            preds.vulnerability[node] = label;
        }
        let bundle = compute_task_losses(&preds, &prep);
        assert_eq!(bundle.virality, 0.0);
        assert_eq!(bundle.vuln, 0.0);
        // Correct class with a 20-logit margin: cross-entropy near zero.
        assert!(bundle.rumor < 1e-8);
        assert!(bundle.rumor > 0.0);
    }

    #[test]
    fn no_labeled_users_means_zero_vuln_loss_and_seed() {
        let mut prep = prepared_fixture();
        prep.vuln_labels.clear();
        let preds = fake_preds([0.3, -0.2], 1.0, &vec![0.7; prep.n_users()]);
        let bundle = compute_task_losses(&preds, &prep);
        assert_eq!(bundle.vuln, 0.0);
        assert_eq!(bundle.labeled_user_count, 0);
        let (_, _, d_vuln) = loss_seeds(&preds, &prep, [1.0; 3]);
        assert!(d_vuln.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn hand_computed_losses_and_seeds() {
        let mut prep = prepared_fixture();
        assert_eq!(prep.class, Label::Rumor);
        prep.virality_target = 3.0;
        prep.vuln_labels = vec![(0, 0.0), (1, 1.0)];
        let preds = fake_preds([0.2, -0.1], 2.5, &[0.2, 0.9]);

        let bundle = compute_task_losses(&preds, &prep);
        let lse = (0.2f64.exp() + (-0.1f64).exp()).ln();
        assert!((bundle.rumor - (lse - (-0.1))).abs() < 1e-12);
        assert!((bundle.virality - 0.25).abs() < 1e-12);
        // ((0.2-0)^2 + (0.9-1)^2) / 2 = 0.025.
        assert!((bundle.vuln - 0.025).abs() < 1e-12);
        assert_eq!(bundle.labeled_user_count, 2);

        let (d_logits, d_vir, d_vuln) = loss_seeds(&preds, &prep, [1.0; 3]);
        let p0 = (0.2 - lse).exp();
        let p1 = (-0.1 - lse).exp();
        assert!((d_logits[0] - p0).abs() < 1e-12);
        assert!((d_logits[1] - (p1 - 1.0)).abs() < 1e-12);
        assert!((d_vir - (-1.0)).abs() < 1e-12);
        assert!((d_vuln[0] - 0.2).abs() < 1e-12);
        assert!((d_vuln[1] - (-0.1)).abs() < 1e-12);
    }

    #[test]
    fn weights_scale_and_mask_seeds() {
        let mut prep = prepared_fixture();
        prep.vuln_labels = vec![(0, 0.25)];
        let preds = fake_preds([0.5, 0.1], 2.0, &[0.75, 0.4]);
        let (d_logits, d_vir, d_vuln) = loss_seeds(&preds, &prep, [2.0, 0.0, 0.5]);
        let (b_logits, b_vir, b_vuln) = loss_seeds(&preds, &prep, [1.0; 3]);
        assert!((d_logits[0] - 2.0 * b_logits[0]).abs() < 1e-15);
        assert!((d_logits[1] - 2.0 * b_logits[1]).abs() < 1e-15);
        assert_eq!(d_vir, 0.0);
        assert!(b_vir != 0.0);
        assert!((d_vuln[0] - 0.5 * b_vuln[0]).abs() < 1e-15);
        assert_eq!(d_vuln[1], 0.0);
    }

    // Seeds are claimed to be exact derivatives of the weighted bundle.
    #[test]
    fn seeds_match_finite_differences() {
        let mut prep = prepared_fixture();
        prep.virality_target = 1.7;
        prep.vuln_labels = vec![(1, 0.6)];
        let weights = [1.0, 1.0, 1.0];
        let loss = |logits: [f64; 2], vir: f64, vuln: [f64; 2]| {
            compute_task_losses(&fake_preds(logits, vir, &vuln), &prep).weighted(weights)
        };
        let base_logits = [0.3, -0.4];
        let base_vir = 2.2;
        let base_vuln = [0.35, 0.8];
        let (d_logits, d_vir, d_vuln) =
            loss_seeds(&fake_preds(base_logits, base_vir, &base_vuln), &prep, weights);

        let h = 1e-6;
        for j in 0..2 {
            let mut up = base_logits;
            let mut dn = base_logits;
            up[j] += h;
            dn[j] -= h;
            let fd = (loss(up, base_vir, base_vuln) - loss(dn, base_vir, base_vuln)) / (2.0 * h);
            assert!((fd - d_logits[j]).abs() < 1e-8, "logit {j}: {fd} vs {}", d_logits[j]);
        }
        let fd_vir = (loss(base_logits, base_vir + h, base_vuln)
            - loss(base_logits, base_vir - h, base_vuln))
            / (2.0 * h);
        assert!((fd_vir - d_vir).abs() < 1e-8);
        for j in 0..2 {
            let mut up = base_vuln;
            let mut dn = base_vuln;
            up[j] += h;
            dn[j] -= h;
            let fd = (loss(base_logits, base_vir, up) - loss(base_logits, base_vir, dn)) / (2.0 * h);
            assert!((fd - d_vuln[j]).abs() < 1e-8, "vuln {j}");
        }
    }
}
