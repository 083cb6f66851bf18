//! Conditional diffusion policy: observation encoder plus noise predictor,
//! noise-prediction training loss, DDIM sampler and receding-horizon control.

mod checkpoint;
mod loss;
mod network;
mod normalize;
mod rollout;
mod sampler;
mod schedule;
mod train;

pub use checkpoint::{Checkpoint, NetRecord, CHECKPOINT_VERSION};
pub use loss::{diffusion_loss, diffusion_loss_value, training_samples, weighted_diffusion_loss, TrainingSample};
pub use network::{encode_obs, time_embedding, NoisePredictor, PolicyConfig, PolicyNets, PolicyParams};
pub use normalize::ActionNormalizer;
pub use rollout::{act, rollout, Transition};
pub use sampler::{denoise, sample_chunk, sample_normalized_chunk, SamplerConfig};
pub use schedule::{DdimStep, NoiseSchedule};
pub use train::{train, TrainConfig, TrainStats};

#[doc(hidden)]
pub mod test_support {
    //! Small fixtures shared by unit and integration tests.

    use super::*;
    use crate::error::Result;
    use crate::numerics::RngKey;

    pub fn tiny_config() -> PolicyConfig {
        PolicyConfig {
            latent_dim: 6,
            time_emb_dim: 4,
            encoder_hidden: vec![8],
            eps_hidden: vec![12, 12],
            ..PolicyConfig::default()
        }
    }

    pub fn tiny_policy(seed: u64) -> PolicyParams {
        let norm = ActionNormalizer {
            low: vec![-0.04, -0.03],
            high: vec![0.04, 0.05],
        };
        PolicyParams::init(&tiny_config(), 3, norm, &RngKey::new(seed)).unwrap()
    }

    pub fn random_samples(params: &PolicyParams, n: usize, seed: u64) -> Vec<TrainingSample> {
        let key = RngKey::new(seed);
        (0..n)
            .map(|i| {
                let k = key.fold(i as u64);
                TrainingSample {
                    obs: k.split("obs").uniform(params.obs_dim),
                    chunk: k
                        .split("chunk")
                        .uniform(params.chunk_dim())
                        .into_iter()
                        .map(|u| 2.0 * u - 1.0)
                        .collect(),
                    weight: 1.0,
                }
            })
            .collect()
    }

    /// Predicts exactly the noise that separates `x` from a fixed target.
    pub struct TargetDenoiser {
        target: Vec<f64>,
        schedule: NoiseSchedule,
    }

    impl TargetDenoiser {
        pub fn new(target: Vec<f64>, schedule: NoiseSchedule) -> Self {
            Self { target, schedule }
        }
    }

    impl NoisePredictor for TargetDenoiser {
        fn encode(&self, _obs: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![0.0])
        }

        fn predict_noise(&self, x: &[f64], _latent: &[f64], t: usize) -> Result<Vec<f64>> {
            let ab = self.schedule.alpha_bars()[t];
            Ok(x.iter()
                .zip(&self.target)
                .map(|(x, a)| (x - ab.sqrt() * a) / (1.0 - ab).sqrt())
                .collect())
        }
    }
}
