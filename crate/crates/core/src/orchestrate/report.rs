use serde::{Deserialize, Serialize};

use crate::envs::{EnvName, Trajectory};
use crate::error::{Error, Result};
use crate::explore::ExplorationConfig;
use crate::select::group_by_scenario;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario_id: u64,
    pub attempts: usize,
    pub successes: usize,
    /// Mean pairwise distance between attempts' half-way positions.
    pub dispersion: f64,
}

/// Settings and provenance copied into a report; not derived from the trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub checkpoint_id: String,
    pub env_name: EnvName,
    pub seed: u64,
    pub round: usize,
    pub eta: f64,
    pub exploration: ExplorationConfig,
    pub warm_start: bool,
    /// Whether the selection feeding this checkpoint kept no self trials.
    pub kept_empty: bool,
    pub n_kept: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub meta: ReportMeta,
    pub n_scenarios: usize,
    pub total_attempts: usize,
    pub total_successes: usize,
    pub overall_sr: f64,
    /// Fraction of scenarios with at least one success.
    pub scenario_sr: f64,
    pub mixed_fraction: f64,
    pub all_success_fraction: f64,
    pub zero_success_fraction: f64,
    pub dispersion: f64,
    pub per_scenario: Vec<ScenarioOutcome>,
    pub wall_clock_secs: Option<f64>,
}

fn agent_xy(obs: &[f64]) -> [f64; 2] {
    [obs[0], obs[1]]
}

fn midpoint(traj: &Trajectory) -> [f64; 2] {
    agent_xy(&traj.observations[traj.observations.len() / 2])
}

fn dispersion(group: &[&Trajectory]) -> f64 {
    let pts: Vec<[f64; 2]> = group.iter().map(|t| midpoint(t)).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            total += ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

/// Derives every report statistic from the trials.
pub fn build_report(meta: ReportMeta, trials: &[Trajectory], wall_clock_secs: Option<f64>) -> Result<EvalReport> {
    if trials.is_empty() {
        return Err(Error::Empty("evaluation trials".into()));
    }
    if let Some(t) = trials.iter().find(|t| t.observations.is_empty()) {
        return Err(Error::Empty(format!("observations of trial {}", t.traj_id)));
    }
    let per_scenario: Vec<ScenarioOutcome> = group_by_scenario(trials)
        .iter()
        .map(|(&scenario_id, g)| ScenarioOutcome {
            scenario_id,
            attempts: g.len(),
            successes: g.iter().filter(|t| t.success).count(),
            dispersion: dispersion(g),
        })
        .collect();
    let n = per_scenario.len() as f64;
    let frac = |pred: &dyn Fn(&ScenarioOutcome) -> bool| per_scenario.iter().filter(|s| pred(s)).count() as f64 / n;
    let total_successes = per_scenario.iter().map(|s| s.successes).sum();
    let all_success_fraction = frac(&|s| s.successes == s.attempts);
    let zero_success_fraction = frac(&|s| s.successes == 0);
    Ok(EvalReport {
        meta,
        n_scenarios: per_scenario.len(),
        total_attempts: trials.len(),
        total_successes,
        overall_sr: total_successes as f64 / trials.len() as f64,
        scenario_sr: frac(&|s| s.successes > 0),
        mixed_fraction: frac(&|s| s.successes > 0 && s.successes < s.attempts),
        all_success_fraction,
        zero_success_fraction,
        dispersion: per_scenario.iter().map(|s| s.dispersion).sum::<f64>() / n,
        per_scenario,
        wall_clock_secs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityHistogram {
    pub trials_per_scenario: usize,
    pub n_scenarios: usize,
    /// `bins[k]` counts scenarios with exactly `k` successes.
    pub bins: Vec<usize>,
    pub all_or_nothing_fraction: f64,
    pub zero_success_fraction: f64,
    pub mixed_fraction: f64,
}

/// Scenario counts by number of successes.
pub fn diversity_histogram(trials: &[Trajectory], trials_per_scenario: usize) -> Result<DiversityHistogram> {
    let groups = group_by_scenario(trials);
    let mut bins = vec![0usize; trials_per_scenario + 1];
    for (id, g) in &groups {
        if g.len() != trials_per_scenario {
            return Err(Error::shape(format!("trials of scenario {id:#x}"), trials_per_scenario, g.len()));
        }
        bins[g.iter().filter(|t| t.success).count()] += 1;
    }
    let n = groups.len();
    let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    let extremes = bins[0] + if trials_per_scenario > 0 { bins[trials_per_scenario] } else { 0 };
    Ok(DiversityHistogram {
        trials_per_scenario,
        n_scenarios: n,
        all_or_nothing_fraction: frac(extremes),
        zero_success_fraction: frac(bins[0]),
        mixed_fraction: frac(n - extremes),
        bins,
    })
}
