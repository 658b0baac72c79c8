use ndarray::Array1;
use rand::Rng as _;
use rayon::prelude::*;

use super::head::MlpParams;
use super::tlstm::{tlstm_step, tlstm_step_backward, GateParams, StepCache, TlstmParams};
use super::{ModelConfig, ParamLayout};
use crate::data::Sample;
use crate::error::{CctsError, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub steps: Vec<StepCache>,
    /// Input of every head layer (the first is the final hidden state).
    pub head_inputs: Vec<Array1<f64>>,
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
}

/// T-LSTM encoder plus MLP head. Also used as the gradient container, since
/// gradients share the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: ModelConfig,
    pub tlstm: TlstmParams,
    pub head: MlpParams,
}

fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

fn log_sum_exp(logits: &Array1<f64>) -> f64 {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Sums equal-length vectors with a fixed pairwise tree, so the result does
/// not depend on how the inputs were computed (or on thread count).
pub(crate) fn tree_sum(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut iter = parts.into_iter();
        while let Some(mut a) = iter.next() {
            if let Some(b) = iter.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

impl Network {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            tlstm: TlstmParams::zeros(config.input_dim, config.hidden_dim),
            head: MlpParams::zeros(&config.head_widths()),
        })
    }

    /// Gate and decomposition weights uniform in `±1/√H`, forget bias 1,
    /// other T-LSTM biases 0; head weights uniform in `±1/√fan_in`, biases 0.
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let bound = 1.0 / (config.hidden_dim as f64).sqrt();
        let mut fill = |a: &mut [f64], bound: f64| {
            a.iter_mut()
                .for_each(|v| *v = rng.random_range(-bound..=bound))
        };
        fill(
            net.tlstm.w_d.as_slice_mut().expect("standard layout"),
            bound,
        );
        for gate in gates_mut(&mut net.tlstm) {
            fill(gate.w.as_slice_mut().expect("standard layout"), bound);
            fill(gate.u.as_slice_mut().expect("standard layout"), bound);
        }
        net.tlstm.forget.b.fill(1.0);
        for layer in &mut net.head.layers {
            let b = 1.0 / (layer.w.ncols() as f64).sqrt();
            fill(layer.w.as_slice_mut().expect("standard layout"), b);
        }
        Ok(net)
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(&self.config)
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Tensors in layout order.
    fn tensors(&self) -> Vec<&[f64]> {
        let t = &self.tlstm;
        let mut out = vec![slice(&t.w_d), slice1(&t.b_d)];
        for g in [&t.forget, &t.input, &t.candidate, &t.output] {
            out.extend([slice(&g.w), slice(&g.u), slice1(&g.b)]);
        }
        for layer in &self.head.layers {
            out.extend([slice(&layer.w), slice1(&layer.b)]);
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let t = &mut self.tlstm;
        let mut out = vec![
            t.w_d.as_slice_mut().expect("standard layout"),
            t.b_d.as_slice_mut().expect("standard layout"),
        ];
        for g in [&mut t.forget, &mut t.input, &mut t.candidate, &mut t.output] {
            out.push(g.w.as_slice_mut().expect("standard layout"));
            out.push(g.u.as_slice_mut().expect("standard layout"));
            out.push(g.b.as_slice_mut().expect("standard layout"));
        }
        for layer in &mut self.head.layers {
            out.push(layer.w.as_slice_mut().expect("standard layout"));
            out.push(layer.b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn from_flat(config: &ModelConfig, flat: &[f64]) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        net.set_flat(flat)?;
        Ok(net)
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if flat.len() != expected {
            return Err(CctsError::arg(format!(
                "expected {expected} parameters, got {}",
                flat.len()
            )));
        }
        let mut rest = flat;
        for tensor in self.tensors_mut() {
            let (head, tail) = rest.split_at(tensor.len());
            tensor.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    pub fn forward(&self, sample: &Sample<'_>) -> Result<ForwardCache> {
        if sample.is_empty() {
            return Err(CctsError::arg("cannot run the model on an empty prefix"));
        }
        if sample.values.ncols() != self.config.input_dim {
            return Err(CctsError::arg(format!(
                "sample has {} features, model expects {}",
                sample.values.ncols(),
                self.config.input_dim
            )));
        }
        let hidden = self.config.hidden_dim;
        let mut h = Array1::zeros(hidden);
        let mut c = Array1::zeros(hidden);
        let mut steps = Vec::with_capacity(sample.len());
        for m in 0..sample.len() {
            let delta = if m == 0 {
                0.0
            } else {
                sample.timestamps[m] - sample.timestamps[m - 1]
            };
            let step = tlstm_step(
                &self.tlstm,
                self.config.combine,
                sample.values.row(m),
                delta,
                &h,
                &c,
                m,
            )?;
            h = step.h.clone();
            c = step.c.clone();
            steps.push(step);
        }
        let (head_inputs, logits) = self.head.forward(&h);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(CctsError::Numeric {
                step: sample.len(),
                what: "logits".into(),
            });
        }
        let probs = softmax(&logits);
        Ok(ForwardCache {
            steps,
            head_inputs,
            logits,
            probs,
        })
    }

    pub fn predict_proba(&self, sample: &Sample<'_>) -> Result<Vec<f64>> {
        Ok(self.forward(sample)?.probs.to_vec())
    }

    /// Cross-entropy of one sample, computed from the logits.
    pub fn cross_entropy(cache: &ForwardCache, label: usize) -> f64 {
        log_sum_exp(&cache.logits) - cache.logits[label]
    }

    /// Gradient of the loss given `dL/dlogits`, via backpropagation through time.
    pub fn backward(&self, cache: &ForwardCache, d_logits: Array1<f64>) -> Network {
        let mut grads = Network::zeros(&self.config).expect("config already validated");
        let mut dh = self
            .head
            .backward(&cache.head_inputs, d_logits, &mut grads.head);
        let mut dc = Array1::zeros(self.config.hidden_dim);
        for step in cache.steps.iter().rev() {
            let (dh_prev, dc_prev) = tlstm_step_backward(
                &self.tlstm,
                self.config.combine,
                step,
                &dh,
                &dc,
                &mut grads.tlstm,
            );
            dh = dh_prev;
            dc = dc_prev;
        }
        grads
    }

    /// Cross-entropy of one sample and its flat gradient.
    pub fn sample_loss_and_grad(&self, sample: &Sample<'_>) -> Result<(f64, Vec<f64>)> {
        if sample.label >= self.config.class_count {
            return Err(CctsError::arg(format!(
                "label {} outside {} classes",
                sample.label, self.config.class_count
            )));
        }
        let cache = self.forward(sample)?;
        let loss = Self::cross_entropy(&cache, sample.label);
        let mut d_logits = cache.probs.clone();
        d_logits[sample.label] -= 1.0;
        Ok((loss, self.backward(&cache, d_logits).to_flat()))
    }

    /// Mean cross-entropy over the batch and its exact gradient.
    pub fn loss_and_grad(&self, batch: &[Sample<'_>]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(CctsError::arg("loss_and_grad: empty batch"));
        }
        let parts = batch
            .par_iter()
            .map(|s| self.sample_loss_and_grad(s))
            .collect::<Result<Vec<_>>>()?;
        let n = batch.len() as f64;
        let (losses, grads): (Vec<f64>, Vec<Vec<f64>>) = parts.into_iter().unzip();
        let loss = tree_sum(losses.into_iter().map(|l| vec![l]).collect())[0] / n;
        let mut grad = tree_sum(grads);
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((loss, grad))
    }

    /// Mean cross-entropy without gradients.
    pub fn loss(&self, batch: &[Sample<'_>]) -> Result<f64> {
        if batch.is_empty() {
            return Err(CctsError::arg("loss: empty batch"));
        }
        let losses = batch
            .par_iter()
            .map(|s| self.forward(s).map(|c| Self::cross_entropy(&c, s.label)))
            .collect::<Result<Vec<_>>>()?;
        Ok(tree_sum(losses.into_iter().map(|l| vec![l]).collect())[0] / batch.len() as f64)
    }
}

fn gates_mut(t: &mut TlstmParams) -> [&mut GateParams; 4] {
    [&mut t.forget, &mut t.input, &mut t.candidate, &mut t.output]
}

fn slice(a: &ndarray::Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}
