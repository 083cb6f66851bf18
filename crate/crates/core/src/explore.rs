//! Inference-time exploration: latent ("modal") perturbation with an
//! annealed magnitude, plus action-noise and raised-eta baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngKey;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationKind {
    #[default]
    None,
    Modal,
    ActionNoise,
    DdimEta,
}

impl std::str::FromStr for ExplorationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "modal" => Ok(Self::Modal),
            "action_noise" => Ok(Self::ActionNoise),
            "ddim_eta" => Ok(Self::DdimEta),
            other => Err(Error::Config(format!(
                "unknown exploration kind `{other}` (none, modal, action_noise, ddim_eta)"
            ))),
        }
    }
}

/// How the annealing schedule is indexed.
///
/// Denoising visits inference indices `k = K-1, ..., 0`. `Literal` feeds `k`
/// to [`anneal_gamma`] unchanged, which makes the factor largest near the
/// end of denoising. `Intent` feeds `K - k`, so the factor is 1 at the start
/// (highest noise) and 0 at the last step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    Intent,
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationConfig {
    pub kind: ExplorationKind,
    pub sigma_lat: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub orientation: Orientation,
    pub action_sigma: f64,
    pub eta_override: f64,
    /// Redraw the latent noise at every denoising step instead of once per chunk.
    pub per_step_noise: bool,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            kind: ExplorationKind::None,
            sigma_lat: 0.5,
            kappa1: 4.0,
            kappa2: 16.0,
            orientation: Orientation::Intent,
            action_sigma: 0.1,
            eta_override: 1.0,
            per_step_noise: false,
        }
    }
}

impl ExplorationConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn modal() -> Self {
        Self {
            kind: ExplorationKind::Modal,
            ..Self::default()
        }
    }

    pub fn with_kind(kind: ExplorationKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self, k_infer: usize) -> Result<()> {
        if !(self.kappa1 >= 0.0 && self.kappa1 < self.kappa2 && self.kappa2 <= k_infer as f64) {
            return Err(Error::Config(format!(
                "need 0 <= kappa1 < kappa2 <= {k_infer}, got kappa1={} kappa2={}",
                self.kappa1, self.kappa2
            )));
        }
        if !(self.sigma_lat >= 0.0 && self.sigma_lat.is_finite()) {
            return Err(Error::Config(format!("sigma_lat must be >= 0, got {}", self.sigma_lat)));
        }
        if !(self.action_sigma >= 0.0 && self.action_sigma.is_finite()) {
            return Err(Error::Config(format!("action_sigma must be >= 0, got {}", self.action_sigma)));
        }
        if !(0.0..=1.0).contains(&self.eta_override) {
            return Err(Error::Config(format!("eta_override must lie in [0, 1], got {}", self.eta_override)));
        }
        Ok(())
    }

    /// Modulation factor at inference index `k` after applying the orientation.
    pub fn gamma_eff(&self, k: usize, k_infer: usize) -> Result<f64> {
        let index = match self.orientation {
            Orientation::Intent => (k_infer - k) as f64,
            Orientation::Literal => k as f64,
        };
        anneal_gamma(index, self.kappa1, self.kappa2)
    }
}

/// Piecewise-linear annealing: 1 up to `kappa1`, 0 from `kappa2`, linear between.
pub fn anneal_gamma(k: f64, kappa1: f64, kappa2: f64) -> Result<f64> {
    if kappa1 >= kappa2 {
        return Err(Error::Config(format!(
            "kappa1 ({kappa1}) must be smaller than kappa2 ({kappa2})"
        )));
    }
    Ok(if k <= kappa1 {
        1.0
    } else if k >= kappa2 {
        0.0
    } else {
        (kappa2 - k) / (kappa2 - kappa1)
    })
}

/// `latent + gamma_eff(k) * sigma_lat * n`, with `n ~ N(0, I)` drawn from `key`.
///
/// Passing the same key at every step of a chunk reuses one direction `n`.
pub fn perturb_latent(
    latent: &[f64],
    config: &ExplorationConfig,
    k: usize,
    k_infer: usize,
    key: &RngKey,
) -> Result<Vec<f64>> {
    let noise = key.gaussian(latent.len());
    apply_latent_noise(latent, &noise, config.sigma_lat * config.gamma_eff(k, k_infer)?)
}

fn apply_latent_noise(latent: &[f64], noise: &[f64], scale: f64) -> Result<Vec<f64>> {
    if noise.len() != latent.len() {
        return Err(Error::shape("latent noise", latent.len(), noise.len()));
    }
    if scale == 0.0 {
        return Ok(latent.to_vec());
    }
    Ok(latent.iter().zip(noise).map(|(z, n)| z + scale * n).collect())
}

/// Adds `N(0, action_sigma^2)` to a normalized chunk and re-clips to `[-1, 1]`.
pub fn perturb_action(chunk: &[f64], config: &ExplorationConfig, key: &RngKey) -> Vec<f64> {
    if config.action_sigma == 0.0 {
        return chunk.to_vec();
    }
    chunk
        .iter()
        .zip(key.gaussian(chunk.len()))
        .map(|(a, n)| (a + config.action_sigma * n).clamp(-1.0, 1.0))
        .collect()
}

/// Supplies the conditioning latent for each denoising index.
pub trait LatentProvider {
    fn latent_at(&self, k: usize) -> Result<Vec<f64>>;
}

/// Unperturbed conditioning: the encoder output at every step.
pub struct CleanLatent<'a>(pub &'a [f64]);

impl LatentProvider for CleanLatent<'_> {
    fn latent_at(&self, _k: usize) -> Result<Vec<f64>> {
        Ok(self.0.to_vec())
    }
}

/// Latent perturbed along a direction fixed for the whole chunk (or redrawn
/// per step when `per_step_noise` is set).
pub struct ModalLatent<'a> {
    base: &'a [f64],
    config: &'a ExplorationConfig,
    k_infer: usize,
    key: RngKey,
    shared_noise: Vec<f64>,
}

impl<'a> ModalLatent<'a> {
    pub fn new(base: &'a [f64], config: &'a ExplorationConfig, k_infer: usize, key: RngKey) -> Self {
        let shared_noise = key.gaussian(base.len());
        Self {
            base,
            config,
            k_infer,
            key,
            shared_noise,
        }
    }
}

impl LatentProvider for ModalLatent<'_> {
    fn latent_at(&self, k: usize) -> Result<Vec<f64>> {
        let scale = self.config.sigma_lat * self.config.gamma_eff(k, self.k_infer)?;
        if self.config.per_step_noise {
            let noise = self.key.fold(k as u64).gaussian(self.base.len());
            apply_latent_noise(self.base, &noise, scale)
        } else {
            apply_latent_noise(self.base, &self.shared_noise, scale)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_knot_values() {
        assert_eq!(anneal_gamma(4.0, 4.0, 16.0).unwrap(), 1.0);
        assert_eq!(anneal_gamma(16.0, 4.0, 16.0).unwrap(), 0.0);
        assert_eq!(anneal_gamma(10.0, 4.0, 16.0).unwrap(), 0.5);
        assert_eq!(anneal_gamma(0.0, 4.0, 16.0).unwrap(), 1.0);
        assert_eq!(anneal_gamma(20.0, 4.0, 16.0).unwrap(), 0.0);
        assert!(anneal_gamma(3.0, 5.0, 5.0).is_err());
        assert!(anneal_gamma(3.0, 6.0, 5.0).is_err());
    }

    #[test]
    fn intent_orientation_is_clean_at_last_step() {
        let cfg = ExplorationConfig::modal();
        assert_eq!(cfg.gamma_eff(0, 20).unwrap(), 0.0);
        assert_eq!(cfg.gamma_eff(19, 20).unwrap(), 1.0);
        let literal = ExplorationConfig {
            orientation: Orientation::Literal,
            ..cfg
        };
        assert_eq!(literal.gamma_eff(0, 20).unwrap(), 1.0);
        assert_eq!(literal.gamma_eff(19, 20).unwrap(), 0.0);
        // even with kappa2 = K the last step is clean under intent
        let wide = ExplorationConfig {
            kappa2: 20.0,
            ..ExplorationConfig::modal()
        };
        assert_eq!(wide.gamma_eff(0, 20).unwrap(), 0.0);
    }

    #[test]
    fn zero_sigma_is_identity() {
        let cfg = ExplorationConfig {
            sigma_lat: 0.0,
            ..ExplorationConfig::modal()
        };
        let z = vec![0.1, -0.2, 0.3];
        assert_eq!(perturb_latent(&z, &cfg, 19, 20, &RngKey::new(0)).unwrap(), z);
    }

    #[test]
    fn latent_noise_variance() {
        let cfg = ExplorationConfig::modal();
        let z = vec![0.0; 4];
        let n = 10_000;
        let mut sum_sq = [0.0; 4];
        for i in 0..n {
            let p = perturb_latent(&z, &cfg, 19, 20, &RngKey::new(7).fold(i)).unwrap();
            for d in 0..4 {
                sum_sq[d] += p[d] * p[d];
            }
        }
        for s in sum_sq {
            let var = s / n as f64;
            assert!((var / 0.25 - 1.0).abs() < 0.05, "variance {var}");
        }
    }

    #[test]
    fn modal_latent_reuses_direction() {
        let cfg = ExplorationConfig::modal();
        let base = vec![0.2; 8];
        let provider = ModalLatent::new(&base, &cfg, 20, RngKey::new(3));
        let d19: Vec<f64> = provider.latent_at(19).unwrap().iter().zip(&base).map(|(a, b)| a - b).collect();
        let d10: Vec<f64> = provider.latent_at(10).unwrap().iter().zip(&base).map(|(a, b)| a - b).collect();
        let g10 = cfg.gamma_eff(10, 20).unwrap();
        for (a, b) in d19.iter().zip(&d10) {
            assert!((a * g10 - b).abs() < 1e-12);
        }
        assert_eq!(provider.latent_at(0).unwrap(), base);

        let per_step = ExplorationConfig {
            per_step_noise: true,
            ..cfg.clone()
        };
        let p = ModalLatent::new(&base, &per_step, 20, RngKey::new(3));
        assert_ne!(p.latent_at(19).unwrap(), p.latent_at(18).unwrap());
    }

    #[test]
    fn action_noise_properties() {
        let cfg = ExplorationConfig::with_kind(ExplorationKind::ActionNoise);
        let chunk = vec![0.0; 16];
        let zero = ExplorationConfig {
            action_sigma: 0.0,
            ..cfg.clone()
        };
        assert_eq!(perturb_action(&chunk, &zero, &RngKey::new(0)), chunk);
        let edge = vec![0.99; 16];
        assert!(perturb_action(&edge, &cfg, &RngKey::new(1)).iter().all(|v| v.abs() <= 1.0));

        let n = 10_000;
        let mut total = 0.0;
        for i in 0..n {
            let p = perturb_action(&chunk[..1], &cfg, &RngKey::new(5).fold(i));
            total += p[0].abs();
        }
        let mean = total / n as f64;
        let expect = 0.1 * (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean - expect).abs() / expect < 0.03, "{mean} vs {expect}");
    }

    #[test]
    fn validation() {
        assert!(ExplorationConfig::modal().validate(20).is_ok());
        let bad = ExplorationConfig {
            kappa1: 16.0,
            kappa2: 4.0,
            ..ExplorationConfig::modal()
        };
        assert!(bad.validate(20).is_err());
        let beyond = ExplorationConfig {
            kappa2: 25.0,
            ..ExplorationConfig::modal()
        };
        assert!(beyond.validate(20).is_err());
        assert!("modal".parse::<ExplorationKind>().is_ok());
        assert!("bogus".parse::<ExplorationKind>().is_err());
    }
}
