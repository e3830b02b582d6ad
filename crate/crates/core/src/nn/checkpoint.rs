use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TensorData;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: &str = "1";

/// Serialized model: architecture descriptor plus named tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub architecture: serde_json::Value,
    pub tensors: BTreeMap<String, TensorData>,
    /// Anything else a model needs (standardizers, task, indicator).
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl Checkpoint {
    pub fn new(architecture: serde_json::Value) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION.to_string(),
            architecture,
            tensors: BTreeMap::new(),
            extra: serde_json::Value::Null,
        }
    }

    pub fn tensor(&self, name: &str) -> Result<super::Tensor2> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::Schema(format!("checkpoint has no tensor '{name}'")))?;
        super::Tensor2::try_from(t.clone())
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let text = serde_json::to_string(ckpt)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Schema(format!(
            "{}: checkpoint version {} is not supported",
            path.display(),
            ckpt.version
        )));
    }
    Ok(ckpt)
}
