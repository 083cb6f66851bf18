//! Two deterministic 2D tasks with two solution modes each.
//!
//! `fork_reach`: a point agent starts below a square obstacle and must reach
//! a goal above it, passing either left or right. `pick_place`: the agent
//! grasps an object (approaching from its left or right side) and carries
//! it to a fixed container.

mod expert;
mod trajectory;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngKey;

pub use expert::{expert_episode, gen_demos, scripted_expert, ExpertConfig, Mode};
pub use trajectory::{
    replay, scenario_id, verify_replay, ScenarioDomain, Source, Trajectory,
};

pub const T_MAX: usize = 100;
pub const MAX_STEP: f64 = 0.05;
pub const ACT_DIM: usize = 2;

pub const FORK_GOAL: [f64; 2] = [0.5, 0.9];
pub const FORK_START: [f64; 2] = [0.5, 0.1];
pub const START_JITTER: f64 = 0.05;
pub const OBSTACLE_LO: f64 = 0.40;
pub const OBSTACLE_HI: f64 = 0.60;
pub const GOAL_RADIUS: f64 = 0.05;

pub const CONTAINER: [f64; 2] = [0.5, 0.85];
pub const CONTAINER_RADIUS: f64 = 0.06;
pub const GRASP_RADIUS: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    ForkReach,
    PickPlace,
}

impl EnvName {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::ForkReach => "fork_reach",
            EnvName::PickPlace => "pick_place",
        }
    }

    /// Length of the observation vector produced by [`observe`].
    pub fn obs_dim(self) -> usize {
        match self {
            EnvName::ForkReach => 3,
            EnvName::PickPlace => 6,
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fork_reach" => Ok(EnvName::ForkReach),
            "pick_place" => Ok(EnvName::PickPlace),
            other => Err(Error::UnknownEnv(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub agent_pos: [f64; 2],
    /// Unused by `fork_reach`.
    pub object_pos: [f64; 2],
    pub holding: bool,
    pub t: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub done: bool,
    pub success: bool,
}

#[inline]
pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Uniform offsets in `[-1, 1]` derived from the scenario id alone.
fn scenario_uniforms(scenario_id: u64) -> Vec<f64> {
    RngKey::new(scenario_id)
        .split("reset")
        .uniform(4)
        .into_iter()
        .map(|u| 2.0 * u - 1.0)
        .collect()
}

pub fn reset(env: EnvName, scenario_id: u64) -> EnvState {
    let u = scenario_uniforms(scenario_id);
    let agent_pos = [
        FORK_START[0] + START_JITTER * u[0],
        FORK_START[1] + START_JITTER * u[1],
    ];
    match env {
        EnvName::ForkReach => EnvState {
            agent_pos,
            object_pos: [0.0, 0.0],
            holding: false,
            t: 0,
        },
        EnvName::PickPlace => EnvState {
            agent_pos,
            object_pos: [0.5 + 0.3 * u[2], 0.35 + 0.15 * u[3]],
            holding: false,
            t: 0,
        },
    }
}

/// Fixed flattening of the state; the step counter is scaled to `[0, 1]`.
pub fn observe(env: EnvName, state: &EnvState) -> Vec<f64> {
    let t = state.t as f64 / T_MAX as f64;
    match env {
        EnvName::ForkReach => vec![state.agent_pos[0], state.agent_pos[1], t],
        EnvName::PickPlace => vec![
            state.agent_pos[0],
            state.agent_pos[1],
            state.object_pos[0],
            state.object_pos[1],
            if state.holding { 1.0 } else { 0.0 },
            t,
        ],
    }
}

pub fn is_success(env: EnvName, state: &EnvState) -> bool {
    match env {
        EnvName::ForkReach => dist(state.agent_pos, FORK_GOAL) <= GOAL_RADIUS,
        EnvName::PickPlace => dist(state.object_pos, CONTAINER) <= CONTAINER_RADIUS,
    }
}

pub fn clip_action(action: [f64; 2]) -> [f64; 2] {
    let norm = (action[0] * action[0] + action[1] * action[1]).sqrt();
    if norm > MAX_STEP {
        let s = MAX_STEP / norm;
        [action[0] * s, action[1] * s]
    } else {
        action
    }
}

/// Pushes a point strictly inside the obstacle onto its nearest face.
pub fn project_out_of_obstacle(p: [f64; 2]) -> [f64; 2] {
    let inside = |v: f64| v > OBSTACLE_LO && v < OBSTACLE_HI;
    if !(inside(p[0]) && inside(p[1])) {
        return p;
    }
    let pushes = [
        (p[0] - OBSTACLE_LO, 0, OBSTACLE_LO),
        (OBSTACLE_HI - p[0], 0, OBSTACLE_HI),
        (p[1] - OBSTACLE_LO, 1, OBSTACLE_LO),
        (OBSTACLE_HI - p[1], 1, OBSTACLE_HI),
    ];
    let (_, axis, face) = pushes
        .into_iter()
        .fold((f64::INFINITY, 0, 0.0), |best, cand| if cand.0 < best.0 { cand } else { best });
    let mut out = p;
    out[axis] = face;
    out
}

pub fn obstacle_contains_strictly(p: [f64; 2]) -> bool {
    p.iter().all(|&v| v > OBSTACLE_LO && v < OBSTACLE_HI)
}

pub fn step(env: EnvName, state: &EnvState, action: [f64; 2]) -> Result<StepOutcome> {
    if !action.iter().all(|a| a.is_finite()) {
        return Err(Error::NonFinite(format!("action {action:?} at t={}", state.t)));
    }
    let a = clip_action(action);
    let mut next = state.clone();
    let mut pos = [
        (state.agent_pos[0] + a[0]).clamp(0.0, 1.0),
        (state.agent_pos[1] + a[1]).clamp(0.0, 1.0),
    ];
    match env {
        EnvName::ForkReach => {
            pos = project_out_of_obstacle(pos);
            next.agent_pos = pos;
        }
        EnvName::PickPlace => {
            let moved = [pos[0] - state.agent_pos[0], pos[1] - state.agent_pos[1]];
            next.agent_pos = pos;
            let requests_motion = a[0] != 0.0 || a[1] != 0.0;
            if next.holding {
                next.object_pos = [
                    (state.object_pos[0] + moved[0]).clamp(0.0, 1.0),
                    (state.object_pos[1] + moved[1]).clamp(0.0, 1.0),
                ];
            } else if requests_motion && dist(pos, state.object_pos) <= GRASP_RADIUS {
                next.holding = true;
            }
            // released automatically once the carried object is over the container
            if next.holding && dist(next.object_pos, CONTAINER) <= CONTAINER_RADIUS {
                next.holding = false;
            }
        }
    }
    next.t = state.t + 1;
    let success = is_success(env, &next);
    let done = success || next.t >= T_MAX;
    Ok(StepOutcome {
        state: next,
        done,
        success,
    })
}
