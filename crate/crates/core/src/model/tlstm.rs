use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::MemoryCombine;
use crate::error::{CctsError, Result};

/// `g(Δt) = 1 / ln(e + Δt)`: 1 at Δt = 0, strictly decreasing.
pub fn elapsed_discount(delta_t: f64) -> Result<f64> {
    if !(delta_t >= 0.0) || !delta_t.is_finite() {
        return Err(CctsError::arg(format!(
            "elapsed time must be finite and >= 0, got {delta_t}"
        )));
    }
    Ok(1.0 / (std::f64::consts::E + delta_t).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

impl GateParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w: Array2::zeros((hidden_dim, input_dim)),
            u: Array2::zeros((hidden_dim, hidden_dim)),
            b: Array1::zeros(hidden_dim),
        }
    }

    fn preactivation(&self, x: ArrayView1<f64>, h: &Array1<f64>) -> Array1<f64> {
        self.w.dot(&x) + self.u.dot(h) + &self.b
    }

    fn accumulate(&mut self, dz: &Array1<f64>, x: ArrayView1<f64>, h: &Array1<f64>) {
        add_outer(&mut self.w, dz, x);
        add_outer(&mut self.u, dz, h.view());
        self.b += dz;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TlstmParams {
    pub w_d: Array2<f64>,
    pub b_d: Array1<f64>,
    pub forget: GateParams,
    pub input: GateParams,
    pub candidate: GateParams,
    pub output: GateParams,
}

impl TlstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w_d: Array2::zeros((hidden_dim, hidden_dim)),
            b_d: Array1::zeros(hidden_dim),
            forget: GateParams::zeros(input_dim, hidden_dim),
            input: GateParams::zeros(input_dim, hidden_dim),
            candidate: GateParams::zeros(input_dim, hidden_dim),
            output: GateParams::zeros(input_dim, hidden_dim),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.b_d.len()
    }

    pub fn input_dim(&self) -> usize {
        self.forget.w.ncols()
    }
}

/// Everything one step computed, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub x: Array1<f64>,
    pub discount: f64,
    pub h_prev: Array1<f64>,
    pub c_prev: Array1<f64>,
    /// `C^S = tanh(W_d C + b_d)`
    pub c_short: Array1<f64>,
    /// `C^T = C - C^S`
    pub c_long: Array1<f64>,
    /// Adjusted previous memory `C*`.
    pub c_adjusted: Array1<f64>,
    pub forget: Array1<f64>,
    pub input: Array1<f64>,
    pub candidate: Array1<f64>,
    pub output: Array1<f64>,
    pub c: Array1<f64>,
    pub tanh_c: Array1<f64>,
    pub h: Array1<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn add_outer(target: &mut Array2<f64>, left: &Array1<f64>, right: ArrayView1<f64>) {
    for (mut row, &l) in target.rows_mut().into_iter().zip(left) {
        row.scaled_add(l, &right);
    }
}

pub fn tlstm_step(
    params: &TlstmParams,
    combine: MemoryCombine,
    x: ArrayView1<f64>,
    delta_t: f64,
    h_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
    step: usize,
) -> Result<StepCache> {
    let discount = elapsed_discount(delta_t)?;
    let c_short = (params.w_d.dot(c_prev) + &params.b_d).mapv(f64::tanh);
    let c_long = c_prev - &c_short;
    let c_adjusted = &c_long + &(&c_short * (combine.sign() * discount));

    let forget = params.forget.preactivation(x, h_prev).mapv(sigmoid);
    let input = params.input.preactivation(x, h_prev).mapv(sigmoid);
    let candidate = params.candidate.preactivation(x, h_prev).mapv(f64::tanh);
    let output = params.output.preactivation(x, h_prev).mapv(sigmoid);

    let c = &forget * &c_adjusted + &input * &candidate;
    let tanh_c = c.mapv(f64::tanh);
    let h = &output * &tanh_c;
    if c.iter().chain(h.iter()).any(|v| !v.is_finite()) {
        return Err(CctsError::Numeric {
            step,
            what: "T-LSTM state".into(),
        });
    }
    Ok(StepCache {
        x: x.to_owned(),
        discount,
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        c_short,
        c_long,
        c_adjusted,
        forget,
        input,
        candidate,
        output,
        c,
        tanh_c,
        h,
    })
}

/// Backpropagates `(dL/dh, dL/dC)` of one step into `grads`; returns the
/// gradients with respect to the previous `(h, C)`.
pub(crate) fn tlstm_step_backward(
    params: &TlstmParams,
    combine: MemoryCombine,
    cache: &StepCache,
    dh: &Array1<f64>,
    dc: &Array1<f64>,
    grads: &mut TlstmParams,
) -> (Array1<f64>, Array1<f64>) {
    let d_output = dh * &cache.tanh_c;
    let dc_total = dc + &(dh * &cache.output * &cache.tanh_c.mapv(|t| 1.0 - t * t));

    let dz_forget = &dc_total * &cache.c_adjusted * &cache.forget.mapv(|f| f * (1.0 - f));
    let dz_input = &dc_total * &cache.candidate * &cache.input.mapv(|i| i * (1.0 - i));
    let dz_candidate = &dc_total * &cache.input * &cache.candidate.mapv(|c| 1.0 - c * c);
    let dz_output = d_output * &cache.output.mapv(|o| o * (1.0 - o));
    let dc_adjusted = &dc_total * &cache.forget;

    let x = cache.x.view();
    grads.forget.accumulate(&dz_forget, x, &cache.h_prev);
    grads.input.accumulate(&dz_input, x, &cache.h_prev);
    grads.candidate.accumulate(&dz_candidate, x, &cache.h_prev);
    grads.output.accumulate(&dz_output, x, &cache.h_prev);

    let dh_prev = params.forget.u.t().dot(&dz_forget)
        + params.input.u.t().dot(&dz_input)
        + params.candidate.u.t().dot(&dz_candidate)
        + params.output.u.t().dot(&dz_output);

    // C* = C - C^S + s * g * C^S
    let dc_short = &dc_adjusted * (combine.sign() * cache.discount - 1.0);
    let dz_short = dc_short * &cache.c_short.mapv(|s| 1.0 - s * s);
    add_outer(&mut grads.w_d, &dz_short, cache.c_prev.view());
    grads.b_d += &dz_short;
    let dc_prev = dc_adjusted + params.w_d.t().dot(&dz_short);
    (dh_prev, dc_prev)
}
