use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{CctsError, Result};
use crate::model::Network;

/// Diagonal of the empirical Fisher information: the importance of each
/// parameter for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherDiag {
    pub values: Vec<f64>,
    /// Schedule position of the task it was estimated after.
    pub task: usize,
    pub samples: usize,
}

/// Fisher diagonal and the parameters it anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAnchor {
    pub fisher: FisherDiag,
    pub params: Vec<f64>,
}

/// Mean of squared per-sample log-likelihood gradients.
pub fn estimate_fisher_diag<I>(log_likelihood_grads: I, task: usize) -> Result<FisherDiag>
where
    I: IntoIterator<Item = Result<Vec<f64>>>,
{
    let mut values: Vec<f64> = Vec::new();
    let mut samples = 0usize;
    for grad in log_likelihood_grads {
        let grad = grad?;
        if samples == 0 {
            values = vec![0.0; grad.len()];
        } else if grad.len() != values.len() {
            return Err(CctsError::arg("fisher: gradient length mismatch"));
        }
        values.iter_mut().zip(&grad).for_each(|(f, g)| *f += g * g);
        samples += 1;
    }
    if samples == 0 {
        return Err(CctsError::arg("fisher: no samples"));
    }
    values.iter_mut().for_each(|f| *f /= samples as f64);
    if values.iter().any(|f| !f.is_finite()) {
        return Err(CctsError::Numeric {
            step: samples,
            what: "Fisher diagonal".into(),
        });
    }
    Ok(FisherDiag {
        values,
        task,
        samples,
    })
}

/// Fisher diagonal of the network at the true labels of `samples`. The
/// cross-entropy gradient is the negated log-likelihood gradient, which
/// squaring makes irrelevant.
pub fn network_fisher(
    network: &Network,
    samples: &[Sample<'_>],
    task: usize,
) -> Result<FisherDiag> {
    use rayon::prelude::*;
    let grads: Vec<Result<Vec<f64>>> = samples
        .par_iter()
        .map(|s| network.sample_loss_and_grad(s).map(|(_, g)| g))
        .collect();
    estimate_fisher_diag(grads, task)
}

/// `O = L + λ Σ F_i (θ_i - anchor_i)²` and `∇O = ∇L + 2λ F ⊙ (θ - anchor)`.
pub fn regularized_loss_and_grad(
    loss: f64,
    grad: &[f64],
    theta: &[f64],
    anchor: &[f64],
    fisher: &FisherDiag,
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = grad.len();
    if theta.len() != n || anchor.len() != n || fisher.values.len() != n {
        return Err(CctsError::arg(format!(
            "regularizer length mismatch: grad {n}, theta {}, anchor {}, fisher {}",
            theta.len(),
            anchor.len(),
            fisher.values.len()
        )));
    }
    if lambda == 0.0 {
        return Ok((loss, grad.to_vec()));
    }
    let mut penalty = 0.0;
    let mut out = grad.to_vec();
    for i in 0..n {
        let diff = theta[i] - anchor[i];
        penalty += fisher.values[i] * diff * diff;
        out[i] += 2.0 * lambda * fisher.values[i] * diff;
    }
    Ok((loss + lambda * penalty, out))
}
