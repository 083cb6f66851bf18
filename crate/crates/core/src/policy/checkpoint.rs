use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{PolicyConfig, PolicyNets, PolicyParams};
use super::normalize::ActionNormalizer;
use crate::error::{Error, Result};
use crate::jsonio;
use crate::numerics::{Activation, Matrix, MlpParams};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetRecord {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    /// Row-major flattened weight matrices, one per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl NetRecord {
    fn from_mlp(m: &MlpParams) -> Self {
        Self {
            layer_sizes: m.layer_sizes().to_vec(),
            hidden_activation: m.hidden_activation(),
            output_activation: m.output_activation(),
            weights: m.weights().iter().map(|w| w.as_slice().to_vec()).collect(),
            biases: m.biases().to_vec(),
        }
    }

    fn to_mlp(&self) -> Result<MlpParams> {
        if self.layer_sizes.len() != self.weights.len() + 1 {
            return Err(Error::shape(
                "checkpoint layer_sizes",
                self.weights.len() + 1,
                self.layer_sizes.len(),
            ));
        }
        let weights = self
            .weights
            .iter()
            .zip(self.layer_sizes.windows(2))
            .map(|(w, s)| Matrix::from_vec(s[1], s[0], w.clone()))
            .collect::<Result<Vec<_>>>()?;
        MlpParams::from_parts(weights, self.biases.clone(), self.hidden_activation, self.output_activation)
    }
}

/// On-disk policy. Schedule coefficients are rebuilt from `k_train` and
/// `k_infer` stored in `policy`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub policy: PolicyConfig,
    pub normalizer: ActionNormalizer,
    pub encoder: NetRecord,
    pub eps_net: NetRecord,
}

impl Checkpoint {
    pub fn from_params(params: &PolicyParams, config_hash: &str) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.to_string(),
            obs_dim: params.obs_dim,
            act_dim: crate::envs::ACT_DIM,
            policy: params.config.clone(),
            normalizer: params.normalizer.clone(),
            encoder: NetRecord::from_mlp(&params.nets.encoder),
            eps_net: NetRecord::from_mlp(&params.nets.eps_net),
        }
    }

    pub fn to_params(&self) -> Result<PolicyParams> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let nets = PolicyNets {
            encoder: self.encoder.to_mlp()?,
            eps_net: self.eps_net.to_mlp()?,
        };
        PolicyParams::from_parts(nets, self.policy.clone(), self.obs_dim, self.normalizer.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonio::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        jsonio::read_json(path)
    }

    pub fn to_json(&self) -> Result<String> {
        jsonio::to_pretty(self)
    }
}
