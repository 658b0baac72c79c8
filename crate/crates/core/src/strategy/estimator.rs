use crate::error::{CctsError, Result};

/// `ρ_t = η_t = 1/(t+1)^a`.
pub fn schedule(t: usize, exponent: f64) -> (f64, f64) {
    let v = 1.0 / ((t + 1) as f64).powf(exponent);
    (v, v)
}

/// Recursive gradient estimate `d_t = ∇_t + (1-ρ)(d_{t-1} - ∇_{t-1})`, where
/// both gradients are evaluated on the same mini-batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatorState {
    pub estimate: Option<Vec<f64>>,
    /// Parameters at which the previous step's gradient was taken.
    pub previous_params: Option<Vec<f64>>,
    pub step: usize,
}

impl EstimatorState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }

    /// Whether the correction term needs `∇O(θ_{t-1}; ξ_t)` at this `rho`.
    pub fn needs_previous_gradient(&self, rho: f64) -> bool {
        rho < 1.0 && self.estimate.is_some() && self.previous_params.is_some()
    }

    /// Updates the estimate. `grad_previous` is the gradient at the previous
    /// parameters on the current batch; it may be omitted on the first step
    /// or when `rho == 1`, where the correction vanishes.
    pub fn update(
        &mut self,
        grad_now: &[f64],
        grad_previous: Option<&[f64]>,
        rho: f64,
    ) -> Result<&[f64]> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(CctsError::arg(format!("rho must lie in (0, 1], got {rho}")));
        }
        let next = match (&self.estimate, grad_previous) {
            (Some(prev), Some(g_prev)) if rho < 1.0 => {
                if prev.len() != grad_now.len() || g_prev.len() != grad_now.len() {
                    return Err(CctsError::arg("estimator: gradient length mismatch"));
                }
                let keep = 1.0 - rho;
                grad_now
                    .iter()
                    .zip(prev)
                    .zip(g_prev)
                    .map(|((g, d), gp)| g + keep * (d - gp))
                    .collect()
            }
            _ => grad_now.to_vec(),
        };
        self.step += 1;
        Ok(self.estimate.insert(next))
    }
}
