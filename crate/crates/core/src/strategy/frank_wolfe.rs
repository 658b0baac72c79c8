use crate::error::{CctsError, Result};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `argmin_{‖v - c‖ ≤ D} ⟨d, v⟩ = c - D d/‖d‖`, or `c` when `d = 0`.
pub fn linear_minimizer(direction: &[f64], center: &[f64], radius: f64) -> Result<Vec<f64>> {
    if direction.len() != center.len() {
        return Err(CctsError::arg("linear minimizer: length mismatch"));
    }
    if !(radius > 0.0) {
        return Err(CctsError::arg(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let n = norm(direction);
    if n == 0.0 {
        return Ok(center.to_vec());
    }
    let scale = radius / n;
    Ok(center
        .iter()
        .zip(direction)
        .map(|(c, d)| c - scale * d)
        .collect())
}

/// `θ' = θ + η (v - θ)` with `v` the ball's linear minimizer for `d`. Stays in
/// the ball whenever `θ` does.
pub fn fw_step(
    theta: &[f64],
    direction: &[f64],
    eta: f64,
    center: &[f64],
    radius: f64,
) -> Result<Vec<f64>> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(CctsError::arg(format!("eta must lie in (0, 1], got {eta}")));
    }
    if theta.len() != direction.len() {
        return Err(CctsError::arg("fw_step: length mismatch"));
    }
    let v = linear_minimizer(direction, center, radius)?;
    Ok(theta
        .iter()
        .zip(&v)
        .map(|(t, v)| t + eta * (v - t))
        .collect())
}
