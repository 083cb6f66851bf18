use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SelectionConfig;
use crate::envs::{Trajectory, MAX_STEP};
use crate::error::{Error, Result};
use crate::numerics::{Activation, AdamConfig, AdamState, MlpParams, RngKey};

/// One `(o, a, r, o')` tuple. The last step of every trajectory is terminal.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: [f64; 2],
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
}

/// Sparse terminal reward: 1 on the final step of a successful trajectory.
pub fn transitions(trajectories: &[Trajectory]) -> Vec<Transition> {
    let mut out = Vec::new();
    for traj in trajectories {
        let n = traj.len();
        for t in 0..n {
            let last = t + 1 == n;
            out.push(Transition {
                obs: traj.observations[t].clone(),
                action: traj.actions[t],
                reward: if last && traj.success { 1.0 } else { 0.0 },
                next_obs: traj.observations[t + 1].clone(),
                terminal: last,
            });
        }
    }
    out
}

fn q_input(obs: &[f64], action: [f64; 2]) -> Vec<f64> {
    let mut x = obs.to_vec();
    x.extend(action.iter().map(|a| a / MAX_STEP));
    x
}

/// `|tau - 1(u < 0)| * u^2`
pub fn expectile_loss(u: f64, tau_e: f64) -> f64 {
    let w = if u < 0.0 { 1.0 - tau_e } else { tau_e };
    w * u * u
}

fn expectile_grad(u: f64, tau_e: f64) -> f64 {
    let w = if u < 0.0 { 1.0 - tau_e } else { tau_e };
    2.0 * w * u
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueParams {
    pub q_net: MlpParams,
    pub v_net: MlpParams,
    pub q_target: MlpParams,
    pub v_target: MlpParams,
}

impl ValueParams {
    pub fn init(obs_dim: usize, hidden: &[usize], key: &RngKey) -> Result<Self> {
        let sizes = |input: usize| {
            let mut s = vec![input];
            s.extend(hidden);
            s.push(1);
            s
        };
        let q_net = MlpParams::init(&sizes(obs_dim + 2), Activation::Relu, Activation::Identity, &key.split("q"))?;
        let v_net = MlpParams::init(&sizes(obs_dim), Activation::Relu, Activation::Identity, &key.split("v"))?;
        Ok(Self {
            q_target: q_net.clone(),
            v_target: v_net.clone(),
            q_net,
            v_net,
        })
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        let v = self.v_net.forward(obs)?[0];
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("state value at {obs:?}")));
        }
        Ok(v)
    }

    pub fn q_value(&self, obs: &[f64], action: [f64; 2]) -> Result<f64> {
        Ok(self.q_net.forward(&q_input(obs, action))?[0])
    }
}

/// Mean squared Bellman error of the Q-net against `r + discount * V_target(o')`.
pub fn q_loss(values: &ValueParams, batch: &[&Transition], discount: f64) -> Result<(f64, MlpParams)> {
    if batch.is_empty() {
        return Err(Error::Empty("Q loss batch".into()));
    }
    let n = batch.len() as f64;
    let mut grads = values.q_net.zeros_like();
    let mut total = 0.0;
    for tr in batch {
        let next = if tr.terminal { 0.0 } else { values.v_target.forward(&tr.next_obs)?[0] };
        let target = tr.reward + discount * next;
        let tape = values.q_net.forward_tape(&q_input(&tr.obs, tr.action))?;
        let u = tape.output()[0] - target;
        total += u * u;
        values.q_net.backward_into(&tape, &[2.0 * u / n], &mut grads)?;
    }
    Ok((total / n, grads))
}

/// Mean expectile loss of `Q_target(o, a) - V(o)`.
pub fn v_loss(values: &ValueParams, batch: &[&Transition], tau_e: f64) -> Result<(f64, MlpParams)> {
    if batch.is_empty() {
        return Err(Error::Empty("V loss batch".into()));
    }
    let n = batch.len() as f64;
    let mut grads = values.v_net.zeros_like();
    let mut total = 0.0;
    for tr in batch {
        let q = values.q_target.forward(&q_input(&tr.obs, tr.action))?[0];
        let tape = values.v_net.forward_tape(&tr.obs)?;
        let u = q - tape.output()[0];
        total += expectile_loss(u, tau_e);
        values.v_net.backward_into(&tape, &[-expectile_grad(u, tau_e) / n], &mut grads)?;
    }
    Ok((total / n, grads))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IqlStats {
    pub transitions: usize,
    pub first_v_loss: f64,
    pub final_v_loss: f64,
    pub final_q_loss: f64,
}

/// Alternating Q and V regression with soft-updated target copies.
pub fn iql_fit(
    trajectories: &[Trajectory],
    config: &SelectionConfig,
    key: &RngKey,
) -> Result<(ValueParams, IqlStats)> {
    let data = transitions(trajectories);
    if data.is_empty() {
        return Err(Error::Empty("IQL dataset".into()));
    }
    config.validate()?;
    let obs_dim = data[0].obs.len();
    let mut values = ValueParams::init(obs_dim, &config.iql_hidden, &key.split("init"))?;
    let adam = AdamConfig {
        lr: config.iql_lr,
        ..AdamConfig::default()
    };
    let mut q_opt = AdamState::new(adam, &values.q_net);
    let mut v_opt = AdamState::new(adam, &values.v_net);
    let mut stats = IqlStats {
        transitions: data.len(),
        ..Default::default()
    };
    let batch_size = config.iql_batch.min(data.len()).max(1);
    let tail_start = config.iql_iters - config.iql_iters / 10;
    let (mut v_tail, mut q_tail, mut count) = (0.0, 0.0, 0usize);
    let mut batch = Vec::with_capacity(batch_size);
    for it in 0..config.iql_iters {
        let mut rng = key.split("batch").fold(it as u64).rng();
        batch.clear();
        batch.extend((0..batch_size).map(|_| &data[rng.random_range(0..data.len())]));
        let (ql, qg) = q_loss(&values, &batch, config.discount)?;
        q_opt.step(&mut values.q_net, &qg)?;
        let (vl, vg) = v_loss(&values, &batch, config.tau_e)?;
        v_opt.step(&mut values.v_net, &vg)?;
        values.q_target.soft_update_from(&values.q_net, config.target_rate);
        values.v_target.soft_update_from(&values.v_net, config.target_rate);
        if it == 0 {
            stats.first_v_loss = vl;
        }
        if it >= tail_start {
            v_tail += vl;
            q_tail += ql;
            count += 1;
        }
    }
    if count > 0 {
        stats.final_v_loss = v_tail / count as f64;
        stats.final_q_loss = q_tail / count as f64;
    }
    Ok((values, stats))
}

/// `min(w_max, exp(delta / beta))`
pub fn increment_weight(delta: f64, beta: f64, w_max: f64) -> f64 {
    (delta / beta).exp().min(w_max)
}

/// Per-step weights from value increments over `horizon` steps; the look-ahead
/// index is clamped to the final observation.
pub fn segment_weights(
    traj: &Trajectory,
    values: &ValueParams,
    horizon: usize,
    beta: f64,
    w_max: f64,
) -> Result<Vec<f64>> {
    let v: Vec<f64> = traj
        .observations
        .iter()
        .map(|o| values.value(o))
        .collect::<Result<_>>()?;
    let last = traj.observations.len() - 1;
    Ok((0..traj.len())
        .map(|t| increment_weight(v[(t + horizon).min(last)] - v[t], beta, w_max))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Source;

    fn path(n: usize, success: bool) -> Trajectory {
        let observations: Vec<Vec<f64>> = (0..=n).map(|t| vec![0.5, t as f64 / n as f64]).collect();
        Trajectory {
            traj_id: "p".into(),
            scenario_id: 0,
            source: Source::Expert,
            round: 0,
            success,
            actions: vec![[0.0, 0.02]; n],
            observations,
            segment_mask: None,
            weights: None,
        }
    }

    #[test]
    fn expectile_spot_values() {
        assert_eq!(expectile_loss(2.0, 0.5), 2.0);
        assert!((expectile_loss(1.0, 0.7) - 0.7).abs() < 1e-15);
        assert!((expectile_loss(-1.0, 0.7) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rewards_are_sparse_and_terminal() {
        let tr = transitions(&[path(5, true), path(3, false)]);
        assert_eq!(tr.len(), 8);
        assert_eq!(tr.iter().map(|t| t.reward).sum::<f64>(), 1.0);
        assert!(tr[4].terminal && tr[4].reward == 1.0);
        assert!(tr[7].terminal && tr[7].reward == 0.0);
    }

    #[test]
    fn weight_spot_values() {
        assert_eq!(increment_weight(0.0, 0.5, 20.0), 1.0);
        assert!((increment_weight(0.5, 0.5, 20.0) - std::f64::consts::E).abs() < 1e-12);
        assert_eq!(increment_weight(50.0, 0.5, 20.0), 20.0);
    }

    #[test]
    fn constant_value_gives_unit_weights() {
        let mut values = ValueParams::init(2, &[4], &RngKey::new(0)).unwrap();
        values.v_net.scale(0.0);
        values.v_net.biases_mut()[1][0] = 0.3;
        let w = segment_weights(&path(6, true), &values, 8, 0.5, 20.0).unwrap();
        assert_eq!(w, vec![1.0; 6]);
    }

    #[test]
    fn empty_dataset_errors() {
        assert!(matches!(
            iql_fit(&[], &SelectionConfig::default(), &RngKey::new(0)),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn fit_reduces_expectile_loss() {
        let cfg = SelectionConfig {
            iql_iters: 300,
            ..SelectionConfig::default()
        };
        let (_, stats) = iql_fit(&[path(10, true), path(10, false)], &cfg, &RngKey::new(1)).unwrap();
        assert!(stats.final_v_loss < stats.first_v_loss, "{stats:?}");
    }

    proptest::proptest! {
        #[test]
        fn weights_monotone_and_bounded(v0 in -2.0..2.0f64, a in -2.0..2.0f64, b in -2.0..2.0f64,
                                        beta in 0.05..2.0f64, w_max in 1.0..50.0f64) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let wl = increment_weight(lo - v0, beta, w_max);
            let wh = increment_weight(hi - v0, beta, w_max);
            proptest::prop_assert!(wl <= wh);
            proptest::prop_assert!(wl > 0.0 && wh <= w_max);
        }
    }
}
