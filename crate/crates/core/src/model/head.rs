use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// out × in
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// MLP from the final hidden state to class logits; tanh between layers,
/// linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

impl MlpParams {
    pub fn zeros(widths: &[usize]) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer {
                w: Array2::zeros((w[1], w[0])),
                b: Array1::zeros(w[1]),
            })
            .collect();
        Self { layers }
    }

    /// Returns the input of every layer followed by the logits.
    pub(crate) fn forward(&self, input: &Array1<f64>) -> (Vec<Array1<f64>>, Array1<f64>) {
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut a = input.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.w.dot(&a) + &layer.b;
            activations.push(a);
            a = if l + 1 < self.layers.len() {
                z.mapv(f64::tanh)
            } else {
                z
            };
        }
        (activations, a)
    }

    /// Accumulates into `grads` and returns dL/d(input).
    pub(crate) fn backward(
        &self,
        activations: &[Array1<f64>],
        d_logits: Array1<f64>,
        grads: &mut MlpParams,
    ) -> Array1<f64> {
        let mut dz = d_logits;
        for l in (0..self.layers.len()).rev() {
            let a = &activations[l];
            for (mut row, &g) in grads.layers[l].w.rows_mut().into_iter().zip(&dz) {
                row.scaled_add(g, a);
            }
            grads.layers[l].b += &dz;
            let da = self.layers[l].w.t().dot(&dz);
            dz = if l > 0 {
                da * &a.mapv(|v| 1.0 - v * v)
            } else {
                da
            };
        }
        dz
    }
}
