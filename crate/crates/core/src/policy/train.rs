use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{weighted_diffusion_loss, TrainingSample};
use super::network::PolicyParams;
use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, AdamState, ParamBlocks, RngKey};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iters: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Decay of the weight average returned as the trained policy; 0 returns the raw weights.
    pub ema_decay: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub iters: usize,
    pub samples: usize,
    pub first_loss: f64,
    /// Mean loss over the last 10% of iterations.
    pub final_loss: f64,
}

/// Fixed-budget minibatch training with a fresh Adam state. Batches are
/// drawn uniformly with replacement; each sample's weight scales its loss.
pub fn train(
    params: &mut PolicyParams,
    samples: &[TrainingSample],
    config: &TrainConfig,
    key: &RngKey,
) -> Result<TrainStats> {
    if samples.is_empty() {
        return Err(Error::Empty("no training samples".into()));
    }
    if !(0.0..1.0).contains(&config.ema_decay) {
        return Err(Error::Config(format!("ema_decay must lie in [0, 1), got {}", config.ema_decay)));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut opt = AdamState::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        &params.nets,
    );
    let tail_start = config.iters - config.iters / 10;
    let mut tail = (0.0, 0usize);
    let mut stats = TrainStats {
        iters: config.iters,
        samples: samples.len(),
        ..Default::default()
    };
    let mut ema = (config.ema_decay > 0.0).then(|| params.nets.clone());
    let mut batch: Vec<&TrainingSample> = Vec::with_capacity(config.batch_size);
    let mut weights = Vec::with_capacity(config.batch_size);
    for it in 0..config.iters {
        let step_key = key.fold(it as u64);
        let mut rng = step_key.split("batch").rng();
        batch.clear();
        weights.clear();
        for _ in 0..config.batch_size {
            let s = &samples[rng.random_range(0..samples.len())];
            batch.push(s);
            weights.push(s.weight);
        }
        let (loss, grads) = weighted_diffusion_loss(params, &batch, &weights, &step_key.split("noise"))?;
        opt.step(&mut params.nets, &grads)?;
        if let Some(avg) = ema.as_mut() {
            let d = config.ema_decay;
            for (a, p) in avg.blocks_mut().into_iter().zip(params.nets.blocks()) {
                a.iter_mut().zip(p).for_each(|(a, p)| *a = d * *a + (1.0 - d) * p);
            }
        }
        if it == 0 {
            stats.first_loss = loss;
        }
        if it >= tail_start {
            tail.0 += loss;
            tail.1 += 1;
        }
    }
    if let Some(avg) = ema {
        params.nets = avg;
    }
    stats.final_loss = if tail.1 > 0 { tail.0 / tail.1 as f64 } else { stats.first_loss };
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::test_support::{random_samples, tiny_policy};

    fn cfg(ema_decay: f64) -> TrainConfig {
        TrainConfig { iters: 30, batch_size: 8, lr: 1e-3, ema_decay }
    }

    #[test]
    fn deterministic_and_reduces_loss() {
        let p0 = tiny_policy(3);
        let samples = random_samples(&p0, 40, 2);
        let run = |c: &TrainConfig| {
            let mut p = p0.clone();
            let s = train(&mut p, &samples, c, &RngKey::new(9)).unwrap();
            (p, s)
        };
        let (a, sa) = run(&cfg(0.0));
        let (b, _) = run(&cfg(0.0));
        assert_eq!(a, b);
        assert_ne!(a, p0);
        assert!(sa.final_loss.is_finite());
    }

    #[test]
    fn average_lags_raw_weights() {
        let p0 = tiny_policy(3);
        let samples = random_samples(&p0, 40, 2);
        let mut raw = p0.clone();
        train(&mut raw, &samples, &cfg(0.0), &RngKey::new(9)).unwrap();
        let mut avg = p0.clone();
        train(&mut avg, &samples, &cfg(0.9), &RngKey::new(9)).unwrap();
        let dist = |a: &PolicyParams, b: &PolicyParams| -> f64 {
            a.nets.blocks().iter().zip(b.nets.blocks()).flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(u, v)| (u - v).powi(2))).sum()
        };
        assert!(dist(&avg, &p0) < dist(&raw, &p0));
        assert!(train(&mut avg, &samples, &cfg(1.0), &RngKey::new(0)).is_err());
    }

    #[test]
    fn empty_samples_error() {
        let mut p = tiny_policy(0);
        assert!(matches!(train(&mut p, &[], &cfg(0.0), &RngKey::new(0)), Err(Error::Empty(_))));
    }
}
