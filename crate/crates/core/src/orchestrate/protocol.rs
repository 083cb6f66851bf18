use rayon::prelude::*;

use crate::envs::{scenario_id, EnvName, ScenarioDomain, Trajectory};
use crate::error::Result;
use crate::numerics::RngKey;
use crate::policy::{rollout, PolicyParams, SamplerConfig};

/// Something that can play one episode from a scenario.
pub trait Agent: Sync {
    fn play(&self, env: EnvName, scenario_id: u64, key: &RngKey, traj_id: String, round: usize) -> Result<Trajectory>;
}

pub struct PolicyAgent<'a> {
    pub params: &'a PolicyParams,
    pub sampler: SamplerConfig,
}

impl Agent for PolicyAgent<'_> {
    fn play(&self, env: EnvName, scenario_id: u64, key: &RngKey, traj_id: String, round: usize) -> Result<Trajectory> {
        rollout(self.params, env, scenario_id, &self.sampler, key, traj_id, round)
    }
}

pub fn scenario_ids(domain: ScenarioDomain, seed: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| scenario_id(domain, seed, i)).collect()
}

/// Key of one attempt; depends only on the seed, the scenario and the attempt index.
pub fn attempt_key(seed: u64, scenario_id: u64, attempt: usize) -> RngKey {
    RngKey::new(seed).split("attempt").fold(scenario_id).fold(attempt as u64)
}

pub fn traj_id(round: usize, scenario_id: u64, attempt: usize) -> String {
    format!("r{round}-{scenario_id:016x}-{attempt}")
}

/// Runs `attempts` episodes per scenario, possibly in parallel. Results come
/// back ordered by (scenario, attempt).
pub fn run_trials<A: Agent + ?Sized>(
    agent: &A,
    env: EnvName,
    scenarios: &[u64],
    attempts: usize,
    seed: u64,
    round: usize,
) -> Result<Vec<Trajectory>> {
    let jobs: Vec<(u64, usize)> = scenarios
        .iter()
        .flat_map(|&s| (0..attempts).map(move |a| (s, a)))
        .collect();
    jobs.par_iter()
        .map(|&(s, a)| agent.play(env, s, &attempt_key(seed, s, a), traj_id(round, s, a), round))
        .collect()
}

/// Trials on the evaluation scenarios of `seed`.
pub fn evaluate_trials<A: Agent + ?Sized>(
    agent: &A,
    env: EnvName,
    n_scenarios: usize,
    attempts: usize,
    seed: u64,
    round: usize,
) -> Result<Vec<Trajectory>> {
    run_trials(agent, env, &scenario_ids(ScenarioDomain::Eval, seed, n_scenarios), attempts, seed, round)
}

/// Trials on the collection scenarios of `seed`, which never overlap the evaluation ones.
pub fn collect_trials<A: Agent + ?Sized>(
    agent: &A,
    env: EnvName,
    n_scenarios: usize,
    attempts: usize,
    seed: u64,
    round: usize,
) -> Result<Vec<Trajectory>> {
    run_trials(agent, env, &scenario_ids(ScenarioDomain::Collect, seed, n_scenarios), attempts, seed, round)
}

#[cfg(test)]
pub(crate) mod stubs {
    use super::*;
    use crate::envs::Source;

    /// Succeeds according to a fixed rule on the attempt index parsed from the id.
    pub struct RuleAgent<F: Fn(u64, usize) -> bool + Sync>(pub F);

    impl<F: Fn(u64, usize) -> bool + Sync> Agent for RuleAgent<F> {
        fn play(&self, _env: EnvName, scenario_id: u64, _key: &RngKey, traj_id: String, round: usize) -> Result<Trajectory> {
            let attempt: usize = traj_id.rsplit('-').next().unwrap().parse().unwrap();
            Ok(Trajectory {
                traj_id,
                scenario_id,
                source: Source::SelfCollected,
                round,
                success: (self.0)(scenario_id, attempt),
                observations: vec![vec![0.5, 0.1, 0.0], vec![0.5, 0.1, 0.01]],
                actions: vec![[0.0, 0.0]],
                segment_mask: None,
                weights: None,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::stubs::RuleAgent;
    use super::*;

    #[test]
    fn order_and_tags() {
        let trials = evaluate_trials(&RuleAgent(|_, _| true), EnvName::ForkReach, 3, 2, 4, 7).unwrap();
        assert_eq!(trials.len(), 6);
        assert!(trials.iter().all(|t| t.round == 7));
        let ids = scenario_ids(ScenarioDomain::Eval, 4, 3);
        assert_eq!(trials[2].scenario_id, ids[1]);
        assert!(trials[3].traj_id.ends_with("-1"));
    }

    fn report_of(trials: &[Trajectory]) -> crate::orchestrate::EvalReport {
        let meta = crate::orchestrate::ReportMeta {
            checkpoint_id: "stub".into(),
            env_name: EnvName::ForkReach,
            seed: 0,
            round: 0,
            eta: 0.0,
            exploration: crate::explore::ExplorationConfig::none(),
            warm_start: true,
            kept_empty: false,
            n_kept: 0,
        };
        crate::orchestrate::build_report(meta, trials, None).unwrap()
    }

    #[test]
    fn always_successful_stub() {
        let trials = evaluate_trials(&RuleAgent(|_, _| true), EnvName::ForkReach, 6, 5, 0, 0).unwrap();
        let r = report_of(&trials);
        assert_eq!(r.overall_sr, 1.0);
        assert_eq!(r.mixed_fraction, 0.0);
    }

    #[test]
    fn even_attempt_stub() {
        let trials = evaluate_trials(&RuleAgent(|_, a| a % 2 == 0), EnvName::ForkReach, 6, 5, 0, 0).unwrap();
        let r = report_of(&trials);
        assert!(r.per_scenario.iter().all(|s| s.successes == 3 && s.attempts == 5));
        assert_eq!(r.mixed_fraction, 1.0);
        assert_eq!(r.scenario_sr, 1.0);
    }

    #[test]
    fn report_matches_independent_tally() {
        let trials = evaluate_trials(&RuleAgent(|s, a| (s >> 7) % 3 == a as u64 % 3), EnvName::ForkReach, 20, 4, 2, 0).unwrap();
        let r = report_of(&trials);
        let mut tally = std::collections::BTreeMap::<u64, (usize, usize)>::new();
        for t in &trials {
            let e = tally.entry(t.scenario_id).or_default();
            e.0 += 1;
            e.1 += t.success as usize;
        }
        assert_eq!(r.total_successes, tally.values().map(|v| v.1).sum::<usize>());
        assert_eq!(r.n_scenarios, tally.len());
        let zero = tally.values().filter(|v| v.1 == 0).count() as f64 / tally.len() as f64;
        assert_eq!(r.zero_success_fraction, zero);
        for s in &r.per_scenario {
            assert_eq!((s.attempts, s.successes), tally[&s.scenario_id]);
        }
    }

    #[test]
    fn domains_do_not_overlap() {
        let eval = scenario_ids(ScenarioDomain::Eval, 1, 500);
        let collect = scenario_ids(ScenarioDomain::Collect, 1, 500);
        assert!(eval.iter().all(|e| !collect.contains(e)));
    }
}
