//! Run configuration: one JSON object whose sections are the per-module
//! configs. Every section and field is optional and falls back to its
//! default; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::association::AssociationConfig;
use crate::contrastive::{LossWeights, MatchWeights};
use crate::error::{Error, Result};
use crate::evaluation::EvalConfig;
use crate::fusion::FusionConfig;
use crate::pseudo_pair::CropConfig;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub association: AssociationConfig,
    pub crop: CropConfig,
    pub eval: EvalConfig,
    pub fusion: FusionConfig,
    pub match_weights: MatchWeights,
    pub loss_weights: LossWeights,
    pub synth: SynthConfig,
    /// Worker thread cap; all cores when absent.
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.association.validate()?;
        self.crop.validate()?;
        self.eval.validate()?;
        self.fusion.validate()?;
        self.match_weights.validate()?;
        self.loss_weights.validate()?;
        self.synth.validate()?;
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
