//! Data selection: per-scenario success-rate filtering of self-collected
//! trials and value-increment weighting of trajectory segments.

mod iql;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::envs::Trajectory;
use crate::error::{Error, Result};
use crate::numerics::RngKey;

pub use iql::{
    expectile_loss, increment_weight, iql_fit, q_loss, segment_weights, transitions, v_loss, IqlStats,
    Transition, ValueParams,
};

/// Weight given to masked-out steps in soft mode.
pub const MASKED_WEIGHT: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    #[default]
    Soft,
    Hard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Per-scenario success-rate filter. When off, every self trial is kept.
    pub inter_demo: bool,
    /// Value-increment segment weighting.
    pub intra_demo: bool,
    pub theta: f64,
    pub tau_e: f64,
    pub discount: f64,
    pub beta: f64,
    pub w_max: f64,
    pub iql_iters: usize,
    pub iql_lr: f64,
    pub iql_batch: usize,
    pub iql_hidden: Vec<usize>,
    pub target_rate: f64,
    pub mask_mode: MaskMode,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            inter_demo: true,
            intra_demo: false,
            theta: 0.5,
            tau_e: 0.7,
            discount: 0.99,
            beta: 0.5,
            w_max: 20.0,
            iql_iters: 3000,
            iql_lr: 3e-4,
            iql_batch: 64,
            iql_hidden: vec![64, 64],
            target_rate: 0.005,
            mask_mode: MaskMode::Soft,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.theta > 0.0 && self.theta <= 1.0, "0 < theta <= 1"),
            (self.tau_e >= 0.5 && self.tau_e < 1.0, "0.5 <= tau_e < 1"),
            (self.discount > 0.0 && self.discount < 1.0, "0 < discount < 1"),
            (self.beta > 0.0, "beta > 0"),
            (self.w_max >= 1.0, "w_max >= 1"),
            (self.target_rate > 0.0 && self.target_rate <= 1.0, "0 < target_rate <= 1"),
            (self.iql_lr > 0.0, "iql_lr > 0"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, what)) => Err(Error::Config(format!("selection config violates {what}"))),
            None => Ok(()),
        }
    }
}

/// Groups trials by scenario in order of first appearance, keeping trial
/// order within each group.
pub fn group_by_scenario(trials: &[Trajectory]) -> IndexMap<u64, Vec<&Trajectory>> {
    let mut groups: IndexMap<u64, Vec<&Trajectory>> = IndexMap::new();
    for t in trials {
        groups.entry(t.scenario_id).or_default().push(t);
    }
    groups
}

pub fn success_rate(group: &[&Trajectory]) -> f64 {
    if group.is_empty() {
        return 0.0;
    }
    group.iter().filter(|t| t.success).count() as f64 / group.len() as f64
}

/// Keeps the successful trials of scenarios with `0 < SR < theta`.
pub fn inter_demo_filter(trials: &[Trajectory], theta: f64) -> Vec<Trajectory> {
    let mut kept = Vec::new();
    for group in group_by_scenario(trials).values() {
        let sr = success_rate(group);
        if sr > 0.0 && sr < theta {
            kept.extend(group.iter().filter(|t| t.success).map(|t| (*t).clone()));
        }
    }
    kept
}

/// Excludes the steps flagged `false`: down-weighted in soft mode, removed
/// from training in hard mode. An all-true mask is a no-op.
pub fn apply_segment_mask(traj: &Trajectory, mask: &[bool], mode: MaskMode) -> Result<Trajectory> {
    if mask.len() != traj.len() {
        return Err(Error::shape(format!("segment mask for {}", traj.traj_id), traj.len(), mask.len()));
    }
    let mut out = traj.clone();
    if mask.iter().all(|m| *m) {
        return Ok(out);
    }
    match mode {
        MaskMode::Soft => {
            let w = (0..traj.len())
                .map(|t| if mask[t] { traj.weight_at(t) } else { MASKED_WEIGHT })
                .collect();
            out.weights = Some(w);
        }
        MaskMode::Hard => {
            let merged = match &traj.segment_mask {
                Some(old) => old.iter().zip(mask).map(|(a, b)| *a && *b).collect(),
                None => mask.to_vec(),
            };
            out.segment_mask = Some(merged);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSelection {
    pub scenario_id: u64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub kept: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub steps: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub clipped: usize,
}

impl WeightSummary {
    fn of(trajectories: &[Trajectory], w_max: f64) -> Option<Self> {
        let all: Vec<f64> = trajectories.iter().flat_map(|t| t.weights.iter().flatten().copied()).collect();
        if all.is_empty() {
            return None;
        }
        Some(Self {
            steps: all.len(),
            min: all.iter().copied().fold(f64::INFINITY, f64::min),
            max: all.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: all.iter().sum::<f64>() / all.len() as f64,
            clipped: all.iter().filter(|w| **w >= w_max).count(),
        })
    }
}

/// Audit record of one selection pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub round: usize,
    pub theta: f64,
    pub inter_demo: bool,
    pub intra_demo: bool,
    pub n_trials: usize,
    pub n_demos: usize,
    pub n_kept: usize,
    pub kept_empty: bool,
    pub kept: Vec<String>,
    pub scenarios: Vec<ScenarioSelection>,
    pub weights: Option<WeightSummary>,
    pub iql: Option<IqlStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Demonstrations followed by the kept self trials, weights attached
    /// when intra-demo weighting is on.
    pub training_set: Vec<Trajectory>,
    pub manifest: Manifest,
}

/// Full selection stage over one round of self-collected trials.
pub fn select(
    demos: &[Trajectory],
    trials: &[Trajectory],
    config: &SelectionConfig,
    horizon: usize,
    round: usize,
    key: &RngKey,
) -> Result<Selection> {
    config.validate()?;
    let kept = if config.inter_demo {
        inter_demo_filter(trials, config.theta)
    } else {
        trials.to_vec()
    };
    let scenarios = group_by_scenario(trials)
        .iter()
        .map(|(&scenario_id, group)| ScenarioSelection {
            scenario_id,
            trials: group.len(),
            successes: group.iter().filter(|t| t.success).count(),
            success_rate: success_rate(group),
            kept: kept.iter().filter(|k| k.scenario_id == scenario_id).count(),
        })
        .collect();
    let kept_ids: Vec<String> = kept.iter().map(|t| t.traj_id.clone()).collect();
    let mut training_set: Vec<Trajectory> = demos.iter().cloned().chain(kept).collect();
    let mut iql = None;
    if config.intra_demo {
        let (values, stats) = iql_fit(&training_set, config, &key.split("iql"))?;
        for traj in &mut training_set {
            let w = segment_weights(traj, &values, horizon, config.beta, config.w_max)?;
            let merged = (0..traj.len()).map(|t| traj.weight_at(t) * w[t]).collect();
            traj.weights = Some(merged);
        }
        iql = Some(stats);
    }
    let manifest = Manifest {
        round,
        theta: config.theta,
        inter_demo: config.inter_demo,
        intra_demo: config.intra_demo,
        n_trials: trials.len(),
        n_demos: demos.len(),
        n_kept: kept_ids.len(),
        kept_empty: kept_ids.is_empty(),
        kept: kept_ids,
        scenarios,
        weights: WeightSummary::of(&training_set, config.w_max),
        iql,
    };
    Ok(Selection { training_set, manifest })
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    fn ids(ts: &[Trajectory]) -> Vec<String> {
        ts.iter().map(|t| t.traj_id.clone()).collect()
    }

    #[test]
    fn grouping() {
        assert!(group_by_scenario(&[]).is_empty());
        let mut trials = group(3, "SFS");
        trials.extend(group(1, "FF"));
        trials.swap(1, 3);
        let groups = group_by_scenario(&trials);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups.values().map(Vec::len).sum::<usize>(), 5);
        let flat: Vec<&str> = groups.values().flatten().map(|t| t.traj_id.as_str()).collect();
        assert_eq!(flat, ["s3-0", "s3-2", "s3-1", "s1-0", "s1-1"]);
    }

    #[test]
    fn filter_branches() {
        assert_eq!(ids(&inter_demo_filter(&group(0, "SFFFF"), 0.5)), ["s0-0"]);
        assert!(inter_demo_filter(&group(0, "SSSFF"), 0.5).is_empty());
        assert!(inter_demo_filter(&group(0, "FFFFF"), 0.5).is_empty());
        assert!(inter_demo_filter(&group(0, "SFSF"), 0.5).is_empty());
    }

    #[test]
    fn mask_modes() {
        let mut t = trial(0, 0, true);
        t.actions = vec![[0.0, 0.01]; 4];
        t.observations = vec![vec![0.5, 0.1, 0.0]; 5];
        assert_eq!(apply_segment_mask(&t, &[true; 4], MaskMode::Hard).unwrap(), t);
        assert_eq!(apply_segment_mask(&t, &[true; 4], MaskMode::Soft).unwrap(), t);
        let soft = apply_segment_mask(&t, &[false, false, true, true], MaskMode::Soft).unwrap();
        assert_eq!(soft.weights.unwrap(), vec![MASKED_WEIGHT, MASKED_WEIGHT, 1.0, 1.0]);
        let hard = apply_segment_mask(&t, &[false, true, true, true], MaskMode::Hard).unwrap();
        assert_eq!((0..4).filter(|&i| hard.step_enabled(i)).count(), 3);
        assert!(apply_segment_mask(&t, &[true; 3], MaskMode::Soft).is_err());
    }

    #[test]
    fn select_without_filter_keeps_everything() {
        let trials = group(0, "SSF");
        let cfg = SelectionConfig {
            inter_demo: false,
            ..Default::default()
        };
        let sel = select(&[], &trials, &cfg, 8, 1, &RngKey::new(0)).unwrap();
        assert_eq!(sel.manifest.n_kept, 3);
        assert_eq!(sel.training_set, trials);
    }

    #[test]
    fn manifest_of_empty_selection() {
        let demos = group(9, "S");
        let sel = select(&demos, &group(0, "SSSS"), &SelectionConfig::default(), 8, 2, &RngKey::new(0)).unwrap();
        assert!(sel.manifest.kept_empty);
        assert_eq!(sel.training_set, demos);
        assert_eq!(sel.manifest.scenarios[0].success_rate, 1.0);
    }

    proptest::proptest! {
        #[test]
        fn filter_invariant_to_order_within_scenario(outcomes in proptest::collection::vec(proptest::bool::ANY, 1..10),
                                                     theta in 0.05..1.0f64, seed: u64) {
            let trials: Vec<Trajectory> = outcomes.iter().enumerate().map(|(i, s)| trial(0, i, *s)).collect();
            let mut shuffled = trials.clone();
            let n = shuffled.len();
            for i in 0..n {
                shuffled.swap(i, (seed as usize).wrapping_add(i * 7) % n);
            }
            let mut a = ids(&inter_demo_filter(&trials, theta));
            let mut b = ids(&inter_demo_filter(&shuffled, theta));
            a.sort();
            b.sort();
            proptest::prop_assert_eq!(a, b);
        }
    }
}
