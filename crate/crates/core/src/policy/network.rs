use serde::{Deserialize, Serialize};

use super::normalize::ActionNormalizer;
use super::schedule::NoiseSchedule;
use crate::envs::ACT_DIM;
use crate::error::{Error, Result};
use crate::numerics::{Activation, MlpParams, ParamBlocks, RngKey};

/// Architecture and diffusion hyperparameters of the policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub latent_dim: usize,
    pub time_emb_dim: usize,
    /// Action chunk length.
    pub horizon: usize,
    /// Number of leading chunk actions executed before re-planning.
    pub exec_horizon: usize,
    pub k_train: usize,
    pub k_infer: usize,
    pub encoder_hidden: Vec<usize>,
    pub eps_hidden: Vec<usize>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            time_emb_dim: 16,
            horizon: 8,
            exec_horizon: 4,
            k_train: 100,
            k_infer: 20,
            encoder_hidden: vec![64],
            eps_hidden: vec![128, 128],
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.exec_horizon == 0 || self.exec_horizon > self.horizon {
            return Err(Error::Config(format!(
                "need 1 <= exec_horizon <= horizon, got {} and {}",
                self.exec_horizon, self.horizon
            )));
        }
        if self.latent_dim == 0 || self.time_emb_dim < 2 || self.time_emb_dim % 2 != 0 {
            return Err(Error::Config(
                "latent_dim must be positive and time_emb_dim even and >= 2".into(),
            ));
        }
        NoiseSchedule::new(self.k_train, self.k_infer).map(|_| ())
    }

    pub fn chunk_dim(&self) -> usize {
        self.horizon * ACT_DIM
    }
}

/// The two trained networks: observation encoder and noise predictor.
/// Also used as the gradient container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyNets {
    pub encoder: MlpParams,
    pub eps_net: MlpParams,
}

impl PolicyNets {
    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.zeros_like(),
            eps_net: self.eps_net.zeros_like(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.encoder.scale(factor);
        self.eps_net.scale(factor);
    }
}

impl ParamBlocks for PolicyNets {
    fn blocks(&self) -> Vec<&[f64]> {
        let mut b = self.encoder.blocks();
        b.extend(self.eps_net.blocks());
        b
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut b = self.encoder.blocks_mut();
        b.extend(self.eps_net.blocks_mut());
        b
    }

    fn block_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .encoder
            .block_names()
            .into_iter()
            .map(|n| format!("encoder.{n}"))
            .collect();
        names.extend(self.eps_net.block_names().into_iter().map(|n| format!("eps_net.{n}")));
        names
    }
}

/// Sinusoidal features of a training timestep.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    let denom = (half.max(2) - 1) as f64;
    let freqs: Vec<f64> = (0..half)
        .map(|i| (-(10_000f64).ln() * i as f64 / denom).exp())
        .collect();
    out.extend(freqs.iter().map(|f| (t as f64 * f).sin()));
    out.extend(freqs.iter().map(|f| (t as f64 * f).cos()));
    out
}

/// Anything that can condition on an observation and predict noise.
/// Implemented by the trained policy and by analytic test denoisers.
pub trait NoisePredictor {
    fn encode(&self, obs: &[f64]) -> Result<Vec<f64>>;
    fn predict_noise(&self, noisy_chunk: &[f64], latent: &[f64], timestep: usize) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub nets: PolicyNets,
    pub schedule: NoiseSchedule,
    pub config: PolicyConfig,
    pub obs_dim: usize,
    pub normalizer: ActionNormalizer,
}

impl PolicyParams {
    pub fn init(
        config: &PolicyConfig,
        obs_dim: usize,
        normalizer: ActionNormalizer,
        key: &RngKey,
    ) -> Result<Self> {
        config.validate()?;
        let mut enc_sizes = vec![obs_dim];
        enc_sizes.extend(&config.encoder_hidden);
        enc_sizes.push(config.latent_dim);
        let encoder = MlpParams::init(&enc_sizes, Activation::Relu, Activation::Tanh, &key.split("encoder"))?;

        let mut eps_sizes = vec![config.chunk_dim() + config.latent_dim + config.time_emb_dim];
        eps_sizes.extend(&config.eps_hidden);
        eps_sizes.push(config.chunk_dim());
        let eps_net = MlpParams::init(&eps_sizes, Activation::Relu, Activation::Identity, &key.split("eps_net"))?;
        Self::from_parts(PolicyNets { encoder, eps_net }, config.clone(), obs_dim, normalizer)
    }

    pub fn from_parts(
        nets: PolicyNets,
        config: PolicyConfig,
        obs_dim: usize,
        normalizer: ActionNormalizer,
    ) -> Result<Self> {
        config.validate()?;
        let chunk = config.chunk_dim();
        if nets.encoder.input_dim() != obs_dim || nets.encoder.output_dim() != config.latent_dim {
            return Err(Error::shape(
                "encoder layers",
                format!("{obs_dim} -> ... -> {}", config.latent_dim),
                format!("{:?}", nets.encoder.layer_sizes()),
            ));
        }
        let eps_in = chunk + config.latent_dim + config.time_emb_dim;
        if nets.eps_net.input_dim() != eps_in || nets.eps_net.output_dim() != chunk {
            return Err(Error::shape(
                "eps_net layers",
                format!("{eps_in} -> ... -> {chunk}"),
                format!("{:?}", nets.eps_net.layer_sizes()),
            ));
        }
        if normalizer.low.len() != ACT_DIM || normalizer.high.len() != ACT_DIM {
            return Err(Error::shape("normalizer", ACT_DIM, normalizer.low.len()));
        }
        let schedule = NoiseSchedule::new(config.k_train, config.k_infer)?;
        Ok(Self {
            nets,
            schedule,
            config,
            obs_dim,
            normalizer,
        })
    }

    pub fn chunk_dim(&self) -> usize {
        self.config.chunk_dim()
    }

    /// Concatenated `[noisy chunk | latent | time embedding]`.
    pub(crate) fn eps_input(&self, noisy_chunk: &[f64], latent: &[f64], timestep: usize) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.nets.eps_net.input_dim());
        input.extend_from_slice(noisy_chunk);
        input.extend_from_slice(latent);
        input.extend(time_embedding(timestep, self.config.time_emb_dim));
        input
    }
}

impl NoisePredictor for PolicyParams {
    fn encode(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.nets.encoder.forward(obs)
    }

    fn predict_noise(&self, noisy_chunk: &[f64], latent: &[f64], timestep: usize) -> Result<Vec<f64>> {
        if noisy_chunk.len() != self.chunk_dim() || latent.len() != self.config.latent_dim {
            return Err(Error::shape(
                "noise prediction input",
                format!("chunk {} + latent {}", self.chunk_dim(), self.config.latent_dim),
                format!("chunk {} + latent {}", noisy_chunk.len(), latent.len()),
            ));
        }
        self.nets.eps_net.forward(&self.eps_input(noisy_chunk, latent, timestep))
    }
}

/// Observation encoder output; bounded in `(-1, 1)` by the tanh head.
pub fn encode_obs(params: &PolicyParams, obs: &[f64]) -> Result<Vec<f64>> {
    params.encode(obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::test_support::tiny_policy;

    #[test]
    fn encoder_is_deterministic_and_bounded() {
        let p = tiny_policy(0);
        let obs = [0.5, 0.1, 0.0];
        let z = encode_obs(&p, &obs).unwrap();
        assert_eq!(z.len(), p.config.latent_dim);
        assert_eq!(z, encode_obs(&p, &obs).unwrap());
        let far = encode_obs(&p, &[1e3, -1e3, 5.0]).unwrap();
        assert!(z.iter().chain(&far).all(|v| v.abs() < 1.0 || v.abs() == 1.0));
        assert!(far.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn distinct_observations_get_distinct_latents() {
        let p = tiny_policy(3);
        let a = encode_obs(&p, &[0.47, 0.12, 0.0]).unwrap();
        let b = encode_obs(&p, &[0.53, 0.08, 0.0]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn shape_errors() {
        let p = tiny_policy(0);
        assert!(encode_obs(&p, &[0.1]).is_err());
        assert!(p.predict_noise(&[0.0; 3], &vec![0.0; p.config.latent_dim], 0).is_err());
    }

    #[test]
    fn time_embedding_shape() {
        let e = time_embedding(0, 16);
        assert_eq!(e.len(), 16);
        assert_eq!(&e[..8], &[0.0; 8]);
        assert_eq!(&e[8..], &[1.0; 8]);
        assert_ne!(time_embedding(5, 16), time_embedding(6, 16));
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = PolicyConfig {
            exec_horizon: 9,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
