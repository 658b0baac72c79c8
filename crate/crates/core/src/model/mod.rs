//! Time-aware LSTM encoder with an MLP head, exact forward and backward
//! passes, and a flat, tagged view of every parameter.

mod checkpoint;
mod head;
mod layout;
mod network;
mod tlstm;

pub use checkpoint::{Checkpoint, CHECKPOINT_SCHEMA_VERSION};
pub use head::{DenseLayer, MlpParams};
pub use layout::{ParamLayout, Slot, SlotKind};
pub use network::{ForwardCache, Network};
pub use tlstm::{elapsed_discount, tlstm_step, GateParams, StepCache, TlstmParams};

use serde::{Deserialize, Serialize};

use crate::error::{CctsError, Result};

/// How the long-term memory and the discounted short-term memory recombine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MemoryCombine {
    /// `C* = C^T + Ĉ^S`, as in the original T-LSTM.
    #[default]
    Add,
    /// `C* = C^T - Ĉ^S`.
    Subtract,
}

impl MemoryCombine {
    pub(crate) fn sign(self) -> f64 {
        match self {
            MemoryCombine::Add => 1.0,
            MemoryCombine::Subtract => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Forget,
    Input,
    Candidate,
    Output,
    /// The short-term memory decomposition `tanh(W_d C + b_d)`.
    Decomposition,
}

impl Gate {
    /// The four gates that read the input and hidden state.
    pub const RECURRENT: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Candidate, Gate::Output];
    pub const ALL: [Gate; 5] = [
        Gate::Forget,
        Gate::Input,
        Gate::Candidate,
        Gate::Output,
        Gate::Decomposition,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Gate::Forget => "forget",
            Gate::Input => "input",
            Gate::Candidate => "candidate",
            Gate::Output => "output",
            Gate::Decomposition => "decomposition",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Widths of the MLP hidden layers (tanh); may be empty.
    #[serde(default)]
    pub mlp_hidden: Vec<usize>,
    pub class_count: usize,
    #[serde(default)]
    pub combine: MemoryCombine,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(CctsError::arg("input_dim and hidden_dim must be positive"));
        }
        if self.class_count < 2 {
            return Err(CctsError::arg("class_count must be at least 2"));
        }
        if self.mlp_hidden.contains(&0) {
            return Err(CctsError::arg("MLP hidden widths must be positive"));
        }
        Ok(())
    }

    /// Widths from the T-LSTM output through the logits.
    pub fn head_widths(&self) -> Vec<usize> {
        let mut widths = vec![self.hidden_dim];
        widths.extend(&self.mlp_hidden);
        widths.push(self.class_count);
        widths
    }
}
