//! Gradient-norm task balancing.
//!
//! Task weights are nudged so the per-task gradient magnitudes at a shared
//! layer track relative training progress: tasks that have descended less
//! than average get their gradients amplified. The shared layer here is the
//! node-embedding aggregation weights, the last tensor every task's
//! gradient flows through.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GradNormError {
    /// An enabled task recorded a zero initial loss, so relative progress
    /// L/L0 is undefined for it.
    #[error("initial loss of an enabled task is zero")]
    DegenerateInitialLoss,
}

const MIN_WEIGHT: f64 = 1e-4;

/// One weight update.
///
/// `shared_grad_norms` holds ‖∇_shared L_k‖ of the *unweighted* task
/// losses; the weighted magnitudes are G_k = w_k·g_k. Targets Ḡ·r_k^α are
/// treated as constants, so each weight moves by
/// −lr·sign(G_k − target_k)·g_k, is clamped positive, and the enabled
/// weights are rescaled to sum to their count. Disabled tasks keep their
/// incoming weight untouched.
pub fn gradnorm_update(
    losses: [f64; 3],
    initial_losses: [f64; 3],
    weights: [f64; 3],
    shared_grad_norms: [f64; 3],
    enabled: [bool; 3],
    alpha: f64,
    weight_lr: f64,
) -> Result<[f64; 3], GradNormError> {
    let active: Vec<usize> = (0..3).filter(|&k| enabled[k]).collect();
    if active.is_empty() {
        return Ok(weights);
    }
    if active.iter().any(|&k| initial_losses[k] == 0.0) {
        return Err(GradNormError::DegenerateInitialLoss);
    }

    let g: Vec<f64> = active.iter().map(|&k| weights[k] * shared_grad_norms[k]).collect();
    let g_mean = g.iter().sum::<f64>() / g.len() as f64;

    let progress: Vec<f64> = active.iter().map(|&k| losses[k] / initial_losses[k]).collect();
    let progress_mean = progress.iter().sum::<f64>() / progress.len() as f64;

    let mut out = weights;
    for (i, &k) in active.iter().enumerate() {
        let r = if progress_mean == 0.0 { 1.0 } else { progress[i] / progress_mean };
        let target = g_mean * r.powf(alpha);
        let step = (g[i] - target).signum() * shared_grad_norms[k];
        out[k] = (weights[k] - weight_lr * step).max(MIN_WEIGHT);
    }

    let sum: f64 = active.iter().map(|&k| out[k]).sum();
    let scale = active.len() as f64 / sum;
    for &k in &active {
        out[k] *= scale;
    }
    Ok(out)
}
