use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, Network, Slot};
use crate::error::{CctsError, Result};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Flat parameters with their index map and model config. JSON floats
/// round-trip exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    /// Position in the training schedule after which this was taken;
    /// `None` for the initial model.
    pub task_position: Option<usize>,
    pub config: ModelConfig,
    pub slots: Vec<Slot>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(network: &Network, task_position: Option<usize>) -> Self {
        Self {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            task_position,
            config: network.config.clone(),
            slots: network.layout().slots,
            params: network.to_flat(),
        }
    }

    pub fn network(&self) -> Result<Network> {
        Network::from_flat(&self.config, &self.params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| CctsError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CctsError::io(path, e))?;
        let checkpoint: Checkpoint = serde_json::from_str(&text)?;
        if checkpoint.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(CctsError::Validation(format!(
                "{}: checkpoint schema {} unsupported",
                path.display(),
                checkpoint.schema_version
            )));
        }
        if checkpoint.slots != super::ParamLayout::new(&checkpoint.config).slots {
            return Err(CctsError::Validation(format!(
                "{}: index map does not match config",
                path.display()
            )));
        }
        Ok(checkpoint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn save_load_is_bit_exact() {
        let cfg = ModelConfig {
            input_dim: 2,
            hidden_dim: 3,
            mlp_hidden: vec![4],
            class_count: 3,
            combine: Default::default(),
        };
        let mut net = Network::init(&cfg, &mut substream(8, "init")).unwrap();
        let mut flat = net.to_flat();
        flat[0] = 0.1 + 0.2;
        flat[1] = -1e-300;
        flat[2] = std::f64::consts::PI * 1e10;
        net.set_flat(&flat).unwrap();
        let ckpt = Checkpoint::new(&net, Some(2));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ckpt);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.params), bits(&flat));
        assert_eq!(back.network().unwrap(), net);
    }
}
