use serde::{Deserialize, Serialize};

use super::trajectory::{scenario_id, ScenarioDomain, Source, Trajectory};
use super::{dist, observe, reset, step, EnvName, EnvState, CONTAINER, FORK_GOAL};
use crate::error::{Error, Result};
use crate::numerics::RngKey;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertConfig {
    pub speed: f64,
    pub jitter_std: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            speed: 0.025,
            jitter_std: 0.005,
        }
    }
}

const FORK_WAYPOINTS: [[f64; 2]; 2] = [[0.25, 0.5], [0.75, 0.5]];
const GRASP_OFFSET: f64 = 0.06;

fn toward(from: [f64; 2], to: [f64; 2], speed: f64) -> [f64; 2] {
    let d = dist(from, to);
    if d <= speed {
        [to[0] - from[0], to[1] - from[1]]
    } else {
        [(to[0] - from[0]) * speed / d, (to[1] - from[1]) * speed / d]
    }
}

fn target(env: EnvName, state: &EnvState, mode: Mode) -> [f64; 2] {
    let side = match mode {
        Mode::Left => -1.0,
        Mode::Right => 1.0,
    };
    match env {
        EnvName::ForkReach => {
            let wp = FORK_WAYPOINTS[(mode == Mode::Right) as usize];
            if state.agent_pos[1] < wp[1] - 0.02 {
                wp
            } else {
                FORK_GOAL
            }
        }
        EnvName::PickPlace => {
            if state.holding {
                return CONTAINER;
            }
            let obj = state.object_pos;
            let rel_x = (state.agent_pos[0] - obj[0]) * side;
            let aligned = (state.agent_pos[1] - obj[1]).abs() <= 0.015
                && rel_x >= 0.0
                && rel_x <= GRASP_OFFSET + 0.01;
            if aligned {
                obj
            } else {
                [obj[0] + side * GRASP_OFFSET, obj[1]]
            }
        }
    }
}

/// Waypoint-following velocity command with Gaussian jitter.
pub fn scripted_expert(
    env: EnvName,
    state: &EnvState,
    mode: Mode,
    config: &ExpertConfig,
    key: &RngKey,
) -> [f64; 2] {
    let mut a = toward(state.agent_pos, target(env, state, mode), config.speed);
    if config.jitter_std > 0.0 {
        let n = key.gaussian(2);
        a[0] += config.jitter_std * n[0];
        a[1] += config.jitter_std * n[1];
    }
    a
}

fn expert_rollout(
    env: EnvName,
    scenario: u64,
    mode: Mode,
    config: &ExpertConfig,
    key: &RngKey,
    traj_id: String,
) -> Result<Trajectory> {
    let mut state = reset(env, scenario);
    let mut observations = vec![observe(env, &state)];
    let mut actions = Vec::new();
    let mut success = false;
    loop {
        let a = scripted_expert(env, &state, mode, config, &key.fold(state.t as u64));
        let out = step(env, &state, a)?;
        actions.push(a);
        observations.push(observe(env, &out.state));
        state = out.state;
        if out.done {
            success = success || out.success;
            break;
        }
    }
    Ok(Trajectory {
        traj_id,
        scenario_id: scenario,
        source: Source::Expert,
        round: 0,
        success,
        observations,
        actions,
        segment_mask: None,
        weights: None,
    })
}

/// Rolls out one expert episode for a given scenario and mode.
pub fn expert_episode(
    env: EnvName,
    scenario: u64,
    mode: Mode,
    config: &ExpertConfig,
    key: &RngKey,
) -> Result<Trajectory> {
    expert_rollout(env, scenario, mode, config, key, format!("expert-{scenario:016x}"))
}

/// `n` successful expert demonstrations. Each one's mode is `Right` with
/// probability `mode_mix`; failed attempts are re-rolled with a fresh key.
pub fn gen_demos(
    env: EnvName,
    n: usize,
    mode_mix: f64,
    config: &ExpertConfig,
    key: &RngKey,
) -> Result<Vec<Trajectory>> {
    if !(0.0..=1.0).contains(&mode_mix) {
        return Err(Error::Config(format!("mode_mix must lie in [0, 1], got {mode_mix}")));
    }
    let max_attempts = 10 * n.max(1);
    let mut demos = Vec::with_capacity(n);
    let mut failures = 0;
    let mut attempt = 0;
    while demos.len() < n {
        if attempt >= max_attempts || failures * 2 > max_attempts {
            return Err(Error::ExpertFailure {
                failures,
                attempts: attempt,
            });
        }
        let k = key.split("demo").fold(attempt as u64);
        let scenario = scenario_id(ScenarioDomain::Demo, k.digest(), 0);
        let mode = if k.split("mode").uniform(1)[0] < mode_mix {
            Mode::Right
        } else {
            Mode::Left
        };
        let traj = expert_rollout(
            env,
            scenario,
            mode,
            config,
            &k.split("jitter"),
            format!("demo-{:04}", demos.len()),
        )?;
        attempt += 1;
        if traj.success {
            demos.push(traj);
        } else {
            failures += 1;
        }
    }
    Ok(demos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{obstacle_contains_strictly, verify_replay, T_MAX};

    fn x_at_mid_height(traj: &Trajectory) -> f64 {
        // first observation at or above y = 0.5
        traj.observations
            .iter()
            .find(|o| o[1] >= 0.5)
            .map(|o| o[0])
            .expect("trajectory crosses y = 0.5")
    }

    #[test]
    fn fork_expert_success_sweep_and_route_side() {
        let cfg = ExpertConfig::default();
        for mode in [Mode::Left, Mode::Right] {
            let mut ok = 0;
            for i in 0..100u64 {
                let sc = scenario_id(ScenarioDomain::Eval, 11, i);
                let traj = expert_episode(EnvName::ForkReach, sc, mode, &cfg, &RngKey::new(i)).unwrap();
                assert!(traj.len() <= T_MAX);
                assert!(traj.observations.iter().all(|o| !obstacle_contains_strictly([o[0], o[1]])));
                if traj.success {
                    ok += 1;
                    let x = x_at_mid_height(&traj);
                    match mode {
                        Mode::Left => assert!(x < 0.4, "left route crossed at x={x}"),
                        Mode::Right => assert!(x > 0.6, "right route crossed at x={x}"),
                    }
                }
            }
            assert!(ok >= 99, "{mode:?}: {ok}/100");
        }
    }

    #[test]
    fn pick_place_expert_succeeds() {
        let cfg = ExpertConfig::default();
        for mode in [Mode::Left, Mode::Right] {
            let ok = (0..100u64)
                .filter(|&i| {
                    expert_episode(EnvName::PickPlace, i, mode, &cfg, &RngKey::new(i))
                        .unwrap()
                        .success
                })
                .count();
            assert!(ok >= 99, "{mode:?}: {ok}/100");
        }
    }

    #[test]
    fn zero_jitter_is_deterministic() {
        let cfg = ExpertConfig {
            jitter_std: 0.0,
            ..Default::default()
        };
        let a = expert_episode(EnvName::ForkReach, 4, Mode::Left, &cfg, &RngKey::new(1)).unwrap();
        let b = expert_episode(EnvName::ForkReach, 4, Mode::Left, &cfg, &RngKey::new(2)).unwrap();
        assert_eq!(a.actions, b.actions);
    }

    #[test]
    fn gen_demos_postconditions() {
        let cfg = ExpertConfig::default();
        let key = RngKey::new(0);
        let demos = gen_demos(EnvName::ForkReach, 20, 0.5, &cfg, &key).unwrap();
        assert_eq!(demos.len(), 20);
        assert!(demos.iter().all(|d| d.success && d.source == Source::Expert));
        for d in &demos {
            verify_replay(EnvName::ForkReach, d).unwrap();
        }
        let lefts = gen_demos(EnvName::ForkReach, 20, 0.0, &cfg, &key).unwrap();
        assert!(lefts.iter().all(|d| x_at_mid_height(d) < 0.4));
        let again = gen_demos(EnvName::ForkReach, 20, 0.5, &cfg, &key).unwrap();
        assert_eq!(
            crate::jsonio::to_line(&demos).unwrap(),
            crate::jsonio::to_line(&again).unwrap()
        );
        assert!(gen_demos(EnvName::ForkReach, 1, 1.5, &cfg, &key).is_err());
    }

    #[test]
    fn broken_expert_is_reported() {
        // an expert too slow to ever reach the goal
        let cfg = ExpertConfig {
            speed: 0.001,
            jitter_std: 0.0,
        };
        let err = gen_demos(EnvName::ForkReach, 2, 0.5, &cfg, &RngKey::new(0)).unwrap_err();
        assert!(matches!(err, Error::ExpertFailure { .. }));
    }
}
