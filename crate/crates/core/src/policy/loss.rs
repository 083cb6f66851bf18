use rand::Rng;
use rand_distr::StandardNormal;

use super::network::{NoisePredictor, PolicyNets, PolicyParams};
use super::normalize::ActionNormalizer;
use super::schedule::NoiseSchedule;
use crate::envs::Trajectory;
use crate::error::{Error, Result};
use crate::numerics::RngKey;

/// One `(observation, normalized action chunk)` regression target.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub obs: Vec<f64>,
    /// Flattened `horizon x 2` chunk in normalized units.
    pub chunk: Vec<f64>,
    pub weight: f64,
}

/// Cuts every enabled step of every trajectory into a training sample.
/// Chunks running past the end repeat the final action.
pub fn training_samples(
    trajectories: &[Trajectory],
    normalizer: &ActionNormalizer,
    horizon: usize,
) -> Result<Vec<TrainingSample>> {
    let mut out = Vec::new();
    for traj in trajectories {
        traj.validate()?;
        let n = traj.len();
        for t in 0..n {
            if !traj.step_enabled(t) {
                continue;
            }
            let mut chunk = Vec::with_capacity(horizon * 2);
            for h in 0..horizon {
                let a = traj.actions[(t + h).min(n - 1)];
                chunk.extend(normalizer.normalize(a));
            }
            out.push(TrainingSample {
                obs: traj.observations[t].clone(),
                chunk,
                weight: traj.weight_at(t),
            });
        }
    }
    Ok(out)
}

/// Training timestep and target noise for the `i`-th batch element.
pub(crate) fn draw_noise(key: &RngKey, i: usize, k_train: usize, dim: usize) -> (usize, Vec<f64>) {
    let mut rng = key.fold(i as u64).rng();
    let t = rng.random_range(0..k_train);
    let eps = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    (t, eps)
}

fn check_batch(batch: &[&TrainingSample], chunk_dim: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("diffusion loss batch".into()));
    }
    if let Some(s) = batch.iter().find(|s| s.chunk.len() != chunk_dim) {
        return Err(Error::shape("action chunk", chunk_dim, s.chunk.len()));
    }
    Ok(())
}

/// Mean squared noise-prediction error for any predictor (no gradients).
pub fn diffusion_loss_value<P: NoisePredictor>(
    predictor: &P,
    schedule: &NoiseSchedule,
    batch: &[&TrainingSample],
    key: &RngKey,
) -> Result<f64> {
    let dim = batch.first().map_or(0, |s| s.chunk.len());
    check_batch(batch, dim)?;
    let mut total = 0.0;
    for (i, s) in batch.iter().enumerate() {
        let (t, eps) = draw_noise(key, i, schedule.k_train(), dim);
        let noisy = schedule.corrupt(&s.chunk, &eps, t);
        let latent = predictor.encode(&s.obs)?;
        let pred = predictor.predict_noise(&noisy, &latent, t)?;
        total += pred.iter().zip(&eps).map(|(p, e)| (p - e).powi(2)).sum::<f64>() / dim as f64;
    }
    Ok(total / batch.len() as f64)
}

fn loss_and_grads(
    params: &PolicyParams,
    batch: &[&TrainingSample],
    weights: &[f64],
    key: &RngKey,
) -> Result<(f64, PolicyNets)> {
    let dim = params.chunk_dim();
    check_batch(batch, dim)?;
    let latent_dim = params.config.latent_dim;
    let n = batch.len() as f64;
    let mut grads = params.nets.zeros_like();
    let mut total = 0.0;
    for (i, (s, &w)) in batch.iter().zip(weights).enumerate() {
        let (t, eps) = draw_noise(key, i, params.schedule.k_train(), dim);
        let noisy = params.schedule.corrupt(&s.chunk, &eps, t);
        let enc_tape = params.nets.encoder.forward_tape(&s.obs)?;
        let input = params.eps_input(&noisy, enc_tape.output(), t);
        let eps_tape = params.nets.eps_net.forward_tape(&input)?;
        let pred = eps_tape.output();
        let sq: f64 = pred.iter().zip(&eps).map(|(p, e)| (p - e).powi(2)).sum();
        total += w * sq / dim as f64;
        let coeff = 2.0 * w / (n * dim as f64);
        let upstream: Vec<f64> = pred.iter().zip(&eps).map(|(p, e)| coeff * (p - e)).collect();
        let input_grad = params.nets.eps_net.backward_into(&eps_tape, &upstream, &mut grads.eps_net)?;
        params
            .nets
            .encoder
            .backward_into(&enc_tape, &input_grad[dim..dim + latent_dim], &mut grads.encoder)?;
    }
    Ok((total / n, grads))
}

/// Unweighted noise-prediction loss and its exact gradients.
pub fn diffusion_loss(params: &PolicyParams, batch: &[&TrainingSample], key: &RngKey) -> Result<(f64, PolicyNets)> {
    loss_and_grads(params, batch, &vec![1.0; batch.len()], key)
}

/// Per-sample squared errors scaled by `weights` before averaging.
pub fn weighted_diffusion_loss(
    params: &PolicyParams,
    batch: &[&TrainingSample],
    weights: &[f64],
    key: &RngKey,
) -> Result<(f64, PolicyNets)> {
    if weights.len() != batch.len() {
        return Err(Error::shape("per-sample weights", batch.len(), weights.len()));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::Config(format!("sample weights must be positive and finite, got {w}")));
    }
    loss_and_grads(params, batch, weights, key)
}
