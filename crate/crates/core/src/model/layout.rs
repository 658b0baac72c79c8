use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{Gate, ModelConfig};
use crate::error::{CctsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlotKind {
    /// `W_gate`, hidden × input.
    GateInput {
        gate: Gate,
    },
    /// `U_gate`, hidden × hidden.
    GateRecurrent {
        gate: Gate,
    },
    GateBias {
        gate: Gate,
    },
    /// `W_d`, hidden × hidden, applied to the previous memory cell.
    DecompWeight,
    /// MLP layer weights, out × in. Layer 0 reads the T-LSTM hidden state.
    HeadWeight {
        layer: usize,
    },
    HeadBias {
        layer: usize,
    },
}

impl SlotKind {
    pub fn gate(self) -> Option<Gate> {
        match self {
            SlotKind::GateInput { gate }
            | SlotKind::GateRecurrent { gate }
            | SlotKind::GateBias { gate } => Some(gate),
            SlotKind::DecompWeight => Some(Gate::Decomposition),
            _ => None,
        }
    }
}

/// One named tensor inside the flat parameter vector, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub kind: SlotKind,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Flat index of element `(row, col)`.
    pub fn index(&self, row: usize, col: usize) -> usize {
        self.offset + row * self.cols + col
    }
}

/// Bijection between the flat parameter vector and the model's tensors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub slots: Vec<Slot>,
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Widths from the T-LSTM output through the logits.
    pub head_widths: Vec<usize>,
}

impl ParamLayout {
    pub fn new(config: &ModelConfig) -> Self {
        let (d, h) = (config.input_dim, config.hidden_dim);
        let mut slots = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, kind: SlotKind, rows: usize, cols: usize| {
            slots.push(Slot {
                name,
                kind,
                offset,
                rows,
                cols,
            });
            offset += rows * cols;
        };
        push("w_d".into(), SlotKind::DecompWeight, h, h);
        push(
            "b_d".into(),
            SlotKind::GateBias {
                gate: Gate::Decomposition,
            },
            h,
            1,
        );
        for gate in Gate::RECURRENT {
            let tag = &gate.name()[..1];
            push(format!("w_{tag}"), SlotKind::GateInput { gate }, h, d);
            push(format!("u_{tag}"), SlotKind::GateRecurrent { gate }, h, h);
            push(format!("b_{tag}"), SlotKind::GateBias { gate }, h, 1);
        }
        let widths = config.head_widths();
        for layer in 0..widths.len() - 1 {
            push(
                format!("head{layer}.w"),
                SlotKind::HeadWeight { layer },
                widths[layer + 1],
                widths[layer],
            );
            push(
                format!("head{layer}.b"),
                SlotKind::HeadBias { layer },
                widths[layer + 1],
                1,
            );
        }
        Self {
            slots,
            input_dim: d,
            hidden_dim: h,
            head_widths: widths,
        }
    }

    pub fn len(&self) -> usize {
        self.slots.last().map_or(0, |s| s.offset + s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slot(&self, kind: SlotKind) -> Option<&Slot> {
        self.slots.iter().find(|s| s.kind == kind)
    }

    /// Slot containing flat index `index`, with its (row, col).
    pub fn locate(&self, index: usize) -> Option<(&Slot, usize, usize)> {
        self.slots
            .iter()
            .find(|s| s.range().contains(&index))
            .map(|s| {
                let local = index - s.offset;
                (s, local / s.cols, local % s.cols)
            })
    }

    /// Every input weight attached to feature `feature`: column `feature` of
    /// the four gate input matrices.
    pub fn feature_indices(&self, feature: usize) -> Result<Vec<usize>> {
        if feature >= self.input_dim {
            return Err(CctsError::arg(format!(
                "unknown feature {feature} (input_dim {})",
                self.input_dim
            )));
        }
        Ok(self
            .slots
            .iter()
            .filter(|s| matches!(s.kind, SlotKind::GateInput { .. }))
            .flat_map(|s| (0..s.rows).map(move |r| s.index(r, feature)))
            .collect())
    }

    pub fn gate_indices(&self, gate: Gate) -> Vec<usize> {
        self.slots
            .iter()
            .filter(|s| s.kind.gate() == Some(gate))
            .flat_map(Slot::range)
            .collect()
    }

    /// Number of neuron layers with outgoing head weights: the T-LSTM hidden
    /// layer followed by every MLP hidden layer.
    pub fn neuron_layers(&self) -> usize {
        self.head_widths.len() - 1
    }

    /// Outgoing weights of neuron `neuron` in neuron layer `layer`.
    pub fn neuron_indices(&self, layer: usize, neuron: usize) -> Result<Vec<usize>> {
        let slot = self
            .slot(SlotKind::HeadWeight { layer })
            .ok_or_else(|| CctsError::arg(format!("unknown neuron layer {layer}")))?;
        if neuron >= slot.cols {
            return Err(CctsError::arg(format!(
                "layer {layer} has {} neurons, asked for {neuron}",
                slot.cols
            )));
        }
        Ok((0..slot.rows).map(|r| slot.index(r, neuron)).collect())
    }
}
