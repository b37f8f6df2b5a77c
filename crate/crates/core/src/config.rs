//! Run configuration shared by the pipeline and the command line.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frames::{Partitioner, DEFAULT_FLOOR};
use crate::states::DenseLimits;
use crate::tomography::{LadOptions, TomographyBackend};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Bias,
    Psd,
    Lad,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bias" => Ok(Self::Bias),
            "psd" => Ok(Self::Psd),
            "lad" => Ok(Self::Lad),
            _ => Err(Error::Format(format!(
                "unknown backend {s:?} (bias, psd, lad)"
            ))),
        }
    }
}

impl std::str::FromStr for Partitioner {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "naive" => Ok(Self::Naive),
            "node" => Ok(Self::Node),
            "edge" => Ok(Self::Edge),
            _ => Err(Error::Format(format!(
                "unknown partitioner {s:?} (greedy, naive, node, edge)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentityMode {
    Keep,
    Exclude,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub shots: usize,
    pub k: usize,
    pub partitioner: Partitioner,
    pub backend: BackendKind,
    /// Defaults to `d^k` when unset.
    pub s_bias: Option<f64>,
    pub floor: f64,
    pub limits: DenseLimits,
    pub identity: IdentityMode,
    pub lad: LadOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            shots: 1_000_000,
            k: 4,
            partitioner: Partitioner::Greedy,
            backend: BackendKind::Lad,
            s_bias: None,
            floor: DEFAULT_FLOOR,
            limits: DenseLimits::default(),
            identity: IdentityMode::Keep,
            lad: LadOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn tomography_backend(&self, d: usize) -> TomographyBackend {
        match self.backend {
            BackendKind::Bias => TomographyBackend::FrequencyBias {
                s_bias: self
                    .s_bias
                    .unwrap_or_else(|| (d as f64).powi(self.k as i32)),
            },
            BackendKind::Psd => TomographyBackend::LinearInversionPsd,
            BackendKind::Lad => TomographyBackend::ConstrainedLad(self.lad),
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
