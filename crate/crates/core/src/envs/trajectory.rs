use serde::{Deserialize, Serialize};

use super::{is_success, reset, step, observe, EnvName};
use crate::error::{Error, Result};
use crate::numerics::RngKey;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Expert,
    #[serde(rename = "self")]
    SelfCollected,
}

/// One rollout or demonstration.
///
/// `observations` holds the initial observation plus one per executed
/// action, so `observations.len() == actions.len() + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub traj_id: String,
    pub scenario_id: u64,
    pub source: Source,
    pub round: usize,
    pub success: bool,
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<[f64; 2]>,
    #[serde(default)]
    pub segment_mask: Option<Vec<bool>>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

impl Trajectory {
    /// Number of (observation, action) training steps.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn weight_at(&self, t: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[t])
    }

    /// Whether step `t` participates in training (hard segment masks drop steps).
    pub fn step_enabled(&self, t: usize) -> bool {
        self.segment_mask.as_ref().is_none_or(|m| m[t])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.actions.len();
        if self.observations.len() != n + 1 && self.observations.len() != n {
            return Err(Error::shape(
                format!("trajectory {} observations", self.traj_id),
                format!("{} or {}", n + 1, n),
                self.observations.len(),
            ));
        }
        if let Some(m) = &self.segment_mask {
            if m.len() != n {
                return Err(Error::shape(
                    format!("trajectory {} segment_mask", self.traj_id),
                    n,
                    m.len(),
                ));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != n {
                return Err(Error::shape(format!("trajectory {} weights", self.traj_id), n, w.len()));
            }
            if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::Config(format!(
                    "trajectory {} has non-positive or non-finite weight {bad}",
                    self.traj_id
                )));
            }
        }
        Ok(())
    }
}

/// Hash domains that keep demo, evaluation and collection scenarios apart.
/// The domain tag occupies the top two bits of the id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioDomain {
    Eval,
    Collect,
    Demo,
}

impl ScenarioDomain {
    fn tag(self) -> u64 {
        match self {
            ScenarioDomain::Eval => 0,
            ScenarioDomain::Collect => 1,
            ScenarioDomain::Demo => 2,
        }
    }

    pub fn of(scenario_id: u64) -> Option<Self> {
        match scenario_id >> 62 {
            0 => Some(ScenarioDomain::Eval),
            1 => Some(ScenarioDomain::Collect),
            2 => Some(ScenarioDomain::Demo),
            _ => None,
        }
    }
}

pub fn scenario_id(domain: ScenarioDomain, seed: u64, index: u64) -> u64 {
    let digest = RngKey::new(seed)
        .split("scenario")
        .fold(domain.tag())
        .fold(index)
        .digest();
    (domain.tag() << 62) | (digest >> 2)
}

/// Re-simulates `traj.actions` from the scenario's initial state. Returns
/// the maximum observation deviation and the replayed success flag.
pub fn replay(env: EnvName, traj: &Trajectory) -> Result<(f64, bool)> {
    let mut state = reset(env, traj.scenario_id);
    let mut max_dev: f64 = 0.0;
    let mut compare = |t: usize, obs: &[f64]| -> Result<()> {
        if let Some(rec) = traj.observations.get(t) {
            if rec.len() != obs.len() {
                return Err(Error::shape(format!("replay of {} obs[{t}]", traj.traj_id), obs.len(), rec.len()));
            }
            for (a, b) in rec.iter().zip(obs) {
                max_dev = max_dev.max((a - b).abs());
            }
        }
        Ok(())
    };
    compare(0, &observe(env, &state))?;
    let mut success = is_success(env, &state);
    for (t, &a) in traj.actions.iter().enumerate() {
        let out = step(env, &state, a)?;
        state = out.state;
        success = out.success;
        compare(t + 1, &observe(env, &state))?;
    }
    Ok((max_dev, success))
}

pub fn verify_replay(env: EnvName, traj: &Trajectory) -> Result<()> {
    let (dev, success) = replay(env, traj)?;
    if dev > 1e-9 {
        return Err(Error::Verification(format!(
            "trajectory {} deviates from replay by {dev:e}",
            traj.traj_id
        )));
    }
    if success != traj.success {
        return Err(Error::Verification(format!(
            "trajectory {} records success={} but replays to {}",
            traj.traj_id, traj.success, success
        )));
    }
    Ok(())
}
