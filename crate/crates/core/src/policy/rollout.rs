use super::network::PolicyParams;
use super::sampler::{sample_chunk, SamplerConfig};
use crate::envs::{observe, reset, step, EnvName, EnvState, Source, StepOutcome, Trajectory};
use crate::error::{Error, Result};
use crate::numerics::RngKey;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub action: [f64; 2],
    pub outcome: StepOutcome,
}

/// Samples one chunk at `state` and executes its first `exec_horizon`
/// actions, stopping early when the episode ends.
pub fn act(
    params: &PolicyParams,
    env: EnvName,
    state: &EnvState,
    sampler: &SamplerConfig,
    key: &RngKey,
) -> Result<Vec<Transition>> {
    let obs = observe(env, state);
    if obs.len() != params.obs_dim {
        return Err(Error::shape(format!("{env} observation"), params.obs_dim, obs.len()));
    }
    let chunk = sample_chunk(params, &obs, sampler, &key.fold(state.t as u64))?;
    let mut out = Vec::with_capacity(params.config.exec_horizon);
    let mut cur = state.clone();
    for &action in chunk.iter().take(params.config.exec_horizon) {
        let outcome = step(env, &cur, action)?;
        cur = outcome.state.clone();
        let done = outcome.done;
        out.push(Transition { action, outcome });
        if done {
            break;
        }
    }
    Ok(out)
}

/// Full receding-horizon episode from a scenario's initial state.
pub fn rollout(
    params: &PolicyParams,
    env: EnvName,
    scenario_id: u64,
    sampler: &SamplerConfig,
    key: &RngKey,
    traj_id: String,
    round: usize,
) -> Result<Trajectory> {
    let mut state = reset(env, scenario_id);
    let mut observations = vec![observe(env, &state)];
    let mut actions = Vec::new();
    let success = 'episode: loop {
        for tr in act(params, env, &state, sampler, key)? {
            actions.push(tr.action);
            observations.push(observe(env, &tr.outcome.state));
            state = tr.outcome.state;
            if tr.outcome.done {
                break 'episode tr.outcome.success;
            }
        }
    };
    Ok(Trajectory {
        traj_id,
        scenario_id,
        source: Source::SelfCollected,
        round,
        success,
        observations,
        actions,
        segment_mask: None,
        weights: None,
    })
}
