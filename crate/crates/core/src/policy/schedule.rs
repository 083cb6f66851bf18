use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared-cosine DDPM schedule over `k_train` steps with a DDIM inference
/// sub-sequence of `k_infer` evenly strided training timesteps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    k_train: usize,
    k_infer: usize,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    /// `timesteps[j] = j * stride`, ascending; denoising walks it backwards.
    timesteps: Vec<usize>,
    /// Per inference index `j`: the alpha_bar the DDIM step lands on.
    alpha_bars_prev: Vec<f64>,
    /// Per inference index `j`: the DDIM sigma at eta = 1.
    unit_sigmas: Vec<f64>,
}

/// Coefficients of one DDIM update from inference index `j` to `j - 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DdimStep {
    pub timestep: usize,
    pub alpha_bar: f64,
    pub alpha_bar_prev: f64,
    pub sigma: f64,
}

const MAX_BETA: f64 = 0.999;

fn cosine_alpha_bar(t: f64) -> f64 {
    ((t + 0.008) / 1.008 * std::f64::consts::FRAC_PI_2).cos().powi(2)
}

impl NoiseSchedule {
    pub fn new(k_train: usize, k_infer: usize) -> Result<Self> {
        if k_infer == 0 {
            return Err(Error::Config("k_infer must be positive".into()));
        }
        if k_infer > k_train {
            return Err(Error::Config(format!(
                "k_infer ({k_infer}) must not exceed k_train ({k_train})"
            )));
        }
        let betas: Vec<f64> = (0..k_train)
            .map(|i| {
                let t1 = i as f64 / k_train as f64;
                let t2 = (i + 1) as f64 / k_train as f64;
                (1.0 - cosine_alpha_bar(t2) / cosine_alpha_bar(t1)).min(MAX_BETA)
            })
            .collect();
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars: Vec<f64> = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        let stride = k_train / k_infer;
        let timesteps: Vec<usize> = (0..k_infer).map(|j| j * stride).collect();
        let alpha_bars_prev: Vec<f64> = (0..k_infer)
            .map(|j| if j == 0 { 1.0 } else { alpha_bars[timesteps[j - 1]] })
            .collect();
        let unit_sigmas = (0..k_infer)
            .map(|j| {
                let ab = alpha_bars[timesteps[j]];
                let abp = alpha_bars_prev[j];
                (((1.0 - abp) / (1.0 - ab)) * (1.0 - ab / abp)).max(0.0).sqrt()
            })
            .collect();
        Ok(Self {
            k_train,
            k_infer,
            betas,
            alphas,
            alpha_bars,
            timesteps,
            alpha_bars_prev,
            unit_sigmas,
        })
    }

    pub fn k_train(&self) -> usize {
        self.k_train
    }

    pub fn k_infer(&self) -> usize {
        self.k_infer
    }

    pub fn stride(&self) -> usize {
        self.k_train / self.k_infer
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn timesteps(&self) -> &[usize] {
        &self.timesteps
    }

    /// DDIM coefficients at inference index `j` (`0 <= j < k_infer`).
    pub fn ddim_step(&self, j: usize, eta: f64) -> DdimStep {
        DdimStep {
            timestep: self.timesteps[j],
            alpha_bar: self.alpha_bars[self.timesteps[j]],
            alpha_bar_prev: self.alpha_bars_prev[j],
            sigma: eta * self.unit_sigmas[j],
        }
    }

    /// Sigmas of the whole inference sub-sequence for a given eta.
    pub fn sigmas(&self, eta: f64) -> Vec<f64> {
        self.unit_sigmas.iter().map(|s| eta * s).collect()
    }

    /// Closed-form forward process `sqrt(ab) * x0 + sqrt(1 - ab) * eps`.
    pub fn corrupt(&self, x0: &[f64], eps: &[f64], t: usize) -> Vec<f64> {
        let ab = self.alpha_bars[t];
        let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
        x0.iter().zip(eps).map(|(x, e)| sa * x + sn * e).collect()
    }

    /// Clean-sample estimate from a noisy sample and a noise prediction.
    pub fn predict_x0(&self, x: &[f64], eps: &[f64], alpha_bar: f64) -> Vec<f64> {
        let (sa, sn) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
        x.iter().zip(eps).map(|(x, e)| (x - sn * e) / sa).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngKey;

    #[test]
    fn alpha_bars_strictly_decreasing() {
        let s = NoiseSchedule::new(100, 20).unwrap();
        assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
        assert!(s.alpha_bars()[0] > 0.99);
        assert!(s.betas().iter().all(|b| *b > 0.0 && *b <= MAX_BETA));
    }

    #[test]
    fn strides_are_even() {
        let s = NoiseSchedule::new(100, 20).unwrap();
        assert_eq!(s.stride(), 5);
        assert_eq!(s.timesteps().first(), Some(&0));
        assert_eq!(s.timesteps().last(), Some(&95));
        assert!(s.timesteps().windows(2).all(|w| w[1] - w[0] == 5));
    }

    #[test]
    fn eta_zero_is_deterministic() {
        let s = NoiseSchedule::new(100, 20).unwrap();
        assert!(s.sigmas(0.0).iter().all(|&x| x == 0.0));
        assert!(s.sigmas(1.0).iter().all(|&x| x >= 0.0));
        assert!(s.sigmas(1.0).iter().any(|&x| x > 0.0));
    }

    #[test]
    fn rejects_bad_inference_counts() {
        assert!(NoiseSchedule::new(100, 0).is_err());
        assert!(NoiseSchedule::new(10, 20).is_err());
    }

    #[test]
    fn first_alpha_bar_is_first_alpha() {
        let s = NoiseSchedule::new(100, 20).unwrap();
        assert_eq!(s.alpha_bars()[0], 1.0 - s.betas()[0]);
        let prod: f64 = s.alphas()[..10].iter().product();
        assert!((prod - s.alpha_bars()[9]).abs() < 1e-15);
    }

    #[test]
    fn exact_noise_recovers_clean_sample() {
        let s = NoiseSchedule::new(100, 20).unwrap();
        let key = RngKey::new(1);
        for t in [0, 1, 17, 50, 98] {
            let x0 = key.fold(t as u64).gaussian(16);
            let eps = key.split("eps").fold(t as u64).gaussian(16);
            let noisy = s.corrupt(&x0, &eps, t);
            let back = s.predict_x0(&noisy, &eps, s.alpha_bars()[t]);
            for (a, b) in x0.iter().zip(&back) {
                assert!((a - b).abs() < 1e-9, "t={t}: {a} vs {b}");
            }
        }
        // at t = 0 the corruption is x0 * sqrt(1 - beta0) + eps * sqrt(beta0)
        let x0 = [0.3, -0.7];
        let eps = [1.0, 2.0];
        let noisy = s.corrupt(&x0, &eps, 0);
        let b0 = s.betas()[0];
        assert!((noisy[0] - (0.3 * (1.0 - b0).sqrt() + b0.sqrt())).abs() < 1e-15);
    }
}
