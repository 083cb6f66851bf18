use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{EnvName, ExpertConfig};
use crate::error::{Error, Result};
use crate::explore::ExplorationConfig;
use crate::jsonio;
use crate::policy::{PolicyConfig, SamplerConfig, TrainConfig};
use crate::select::SelectionConfig;

/// Everything that determines a run. Loaded from TOML; every key is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env_name: EnvName,
    pub n_demos: usize,
    /// Probability that a demonstration takes the right-hand mode.
    pub mode_mix: f64,
    pub seeds: Vec<u64>,
    pub n_scenarios_eval: usize,
    pub attempts: usize,
    pub n_scenarios_collect: usize,
    pub attempts_collect: usize,
    pub rounds: usize,
    pub train_iters: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Weight-average decay applied during training; the average is the trained policy.
    pub ema_decay: f64,
    /// DDIM stochasticity used for every rollout.
    pub eta: f64,
    pub warm_start: bool,
    /// Store elapsed seconds in reports. Off by default so reruns are byte-identical.
    pub record_wall_clock: bool,
    /// Exploration used while collecting self data.
    pub exploration: ExplorationConfig,
    pub selection: SelectionConfig,
    pub policy: PolicyConfig,
    pub expert: ExpertConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env_name: EnvName::ForkReach,
            n_demos: 20,
            mode_mix: 0.5,
            seeds: vec![0, 1, 2],
            n_scenarios_eval: 50,
            attempts: 5,
            n_scenarios_collect: 50,
            attempts_collect: 5,
            rounds: 3,
            train_iters: 20_000,
            batch_size: 64,
            lr: 3e-4,
            ema_decay: 0.999,
            eta: 0.0,
            warm_start: true,
            record_wall_clock: false,
            exploration: ExplorationConfig::modal(),
            selection: SelectionConfig::default(),
            policy: PolicyConfig::default(),
            expert: ExpertConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            context: "run config".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&jsonio::read_text(path)?).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                context: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonio::write_text(path, &self.to_toml()?)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_demos", self.n_demos),
            ("n_scenarios_eval", self.n_scenarios_eval),
            ("attempts", self.attempts),
            ("n_scenarios_collect", self.n_scenarios_collect),
            ("attempts_collect", self.attempts_collect),
            ("train_iters", self.train_iters),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!("ema_decay must lie in [0, 1), got {}", self.ema_decay)));
        }
        if !(0.0..=1.0).contains(&self.mode_mix) {
            return Err(Error::Config(format!("mode_mix must lie in [0, 1], got {}", self.mode_mix)));
        }
        self.policy.validate()?;
        self.selection.validate()?;
        self.sampler().validate(self.policy.k_infer)?;
        self.eval_sampler().validate(self.policy.k_infer)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iters: self.train_iters,
            batch_size: self.batch_size,
            lr: self.lr,
            ema_decay: self.ema_decay,
        }
    }

    /// Sampler used for collection.
    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            eta: self.eta,
            exploration: self.exploration.clone(),
        }
    }

    /// Sampler used for evaluation: no exploration.
    pub fn eval_sampler(&self) -> SamplerConfig {
        SamplerConfig {
            eta: self.eta,
            exploration: ExplorationConfig::none(),
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(jsonio::to_line(self)?.as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
