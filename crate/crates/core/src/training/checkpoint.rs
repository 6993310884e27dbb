use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{ParamSet, PolicyParams};

use super::config::TrainConfig;
use super::optim::Adam;
use super::trainer::EpochMetrics;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume training bit-for-bit.
///
/// Random streams are derived from `config.seed` and `step`, so no generator
/// state beyond those two numbers is stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub theta: ParamSet,
    pub phi: ParamSet,
    pub adam_theta: Adam,
    pub adam_phi: Adam,
    pub step: u64,
    pub epoch: usize,
    pub history: Vec<EpochMetrics>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

impl Checkpoint {
    pub fn params(&self) -> Result<PolicyParams> {
        PolicyParams::from_sets(self.config.hyper, self.theta.clone(), self.phi.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                expected: CHECKPOINT_VERSION,
                found: probe.version,
            });
        }
        let ck: Checkpoint = serde_json::from_str(text)?;
        ck.params()?;
        Ok(ck)
    }

    /// Writes through a temporary file so an interrupted save leaves the
    /// previous checkpoint intact.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
