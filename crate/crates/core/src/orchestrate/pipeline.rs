use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{sha256_hex, RunConfig};
use super::protocol::{collect_trials, evaluate_trials, PolicyAgent};
use super::report::{build_report, EvalReport, ReportMeta};
use crate::envs::{gen_demos, Trajectory};
use crate::error::{Error, Result};
use crate::explore::ExplorationConfig;
use crate::jsonio;
use crate::numerics::RngKey;
use crate::policy::{train, training_samples, ActionNormalizer, Checkpoint, PolicyParams, SamplerConfig, TrainStats};
use crate::select::{select, Manifest, SelectionConfig};

/// File locations inside a run directory.
#[derive(Clone, Debug)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn aggregate(&self) -> PathBuf {
        self.root.join("aggregate.json")
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.root.join(format!("seed_{seed}"))
    }

    pub fn demos(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("demos.jsonl")
    }

    pub fn series(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("series.json")
    }

    pub fn round_dir(&self, seed: u64, round: usize) -> PathBuf {
        self.seed_dir(seed).join(format!("round_{round}"))
    }
}

pub const TRIALS_FILE: &str = "trials.jsonl";
pub const COLLECTED_FILE: &str = "collected.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const REPORT_FILE: &str = "report.json";

fn round_key(seed: u64, round: usize) -> RngKey {
    RngKey::new(seed).split("round").fold(round as u64)
}

/// Short content hash identifying a checkpoint.
pub fn checkpoint_id(checkpoint: &Checkpoint) -> Result<String> {
    Ok(sha256_hex(checkpoint.to_json()?.as_bytes())[..16].to_string())
}

pub fn demos_for_seed(cfg: &RunConfig, seed: u64) -> Result<Vec<Trajectory>> {
    gen_demos(cfg.env_name, cfg.n_demos, cfg.mode_mix, &cfg.expert, &RngKey::new(seed).split("demos"))
}

fn fresh_params(cfg: &RunConfig, normalizer: ActionNormalizer, key: &RngKey) -> Result<PolicyParams> {
    PolicyParams::init(&cfg.policy, cfg.env_name.obs_dim(), normalizer, key)
}

/// Initial policy trained on the demonstrations alone. Normalization
/// statistics are fitted here and reused by every later round.
pub fn train_initial(demos: &[Trajectory], cfg: &RunConfig, seed: u64) -> Result<(PolicyParams, TrainStats)> {
    let normalizer = ActionNormalizer::fit(demos)?;
    let key = round_key(seed, 0);
    let mut params = fresh_params(cfg, normalizer, &key.split("init"))?;
    let samples = training_samples(demos, &params.normalizer, cfg.policy.horizon)?;
    let stats = train(&mut params, &samples, &cfg.train_config(), &key.split("train"))?;
    Ok((params, stats))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundOutcome {
    pub params: PolicyParams,
    pub manifest: Manifest,
    pub train: TrainStats,
}

/// Selection followed by a fixed-budget retrain on demos plus kept trials.
pub fn improve_round(
    prev: &PolicyParams,
    demos: &[Trajectory],
    trials: &[Trajectory],
    cfg: &RunConfig,
    selection: &SelectionConfig,
    seed: u64,
    round: usize,
) -> Result<RoundOutcome> {
    let key = round_key(seed, round);
    let chosen = select(demos, trials, selection, cfg.policy.horizon, round, &key.split("select"))?;
    let mut params = if cfg.warm_start {
        prev.clone()
    } else {
        fresh_params(cfg, prev.normalizer.clone(), &key.split("init"))?
    };
    let samples = training_samples(&chosen.training_set, &params.normalizer, cfg.policy.horizon)?;
    let stats = train(&mut params, &samples, &cfg.train_config(), &key.split("train"))?;
    Ok(RoundOutcome {
        params,
        manifest: chosen.manifest,
        train: stats,
    })
}

/// Selection outcome recorded alongside an evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KeptInfo {
    pub n_kept: usize,
    pub kept_empty: bool,
}

impl KeptInfo {
    pub fn of(manifest: &Manifest) -> Self {
        Self {
            n_kept: manifest.n_kept,
            kept_empty: manifest.kept_empty,
        }
    }
}

/// Evaluates a checkpoint without exploration on the seed's evaluation scenarios.
pub fn evaluate(
    checkpoint: &Checkpoint,
    cfg: &RunConfig,
    seed: u64,
    round: usize,
    kept: KeptInfo,
) -> Result<(EvalReport, Vec<Trajectory>)> {
    evaluate_with(checkpoint, cfg, &cfg.eval_sampler(), cfg.attempts, seed, round, kept)
}

pub fn evaluate_with(
    checkpoint: &Checkpoint,
    cfg: &RunConfig,
    sampler: &SamplerConfig,
    attempts: usize,
    seed: u64,
    round: usize,
    kept: KeptInfo,
) -> Result<(EvalReport, Vec<Trajectory>)> {
    let params = checkpoint.to_params()?;
    let start = Instant::now();
    let agent = PolicyAgent {
        params: &params,
        sampler: sampler.clone(),
    };
    let trials = evaluate_trials(&agent, cfg.env_name, cfg.n_scenarios_eval, attempts, seed, round)?;
    let elapsed = cfg.record_wall_clock.then(|| start.elapsed().as_secs_f64());
    let meta = ReportMeta {
        checkpoint_id: checkpoint_id(checkpoint)?,
        env_name: cfg.env_name,
        seed,
        round,
        eta: sampler.eta,
        exploration: sampler.exploration.clone(),
        warm_start: cfg.warm_start,
        kept_empty: kept.kept_empty,
        n_kept: kept.n_kept,
    };
    Ok((build_report(meta, &trials, elapsed)?, trials))
}

/// Self-data collection with the given exploration on the collection scenarios.
pub fn collect(
    params: &PolicyParams,
    cfg: &RunConfig,
    exploration: &ExplorationConfig,
    seed: u64,
    round: usize,
) -> Result<Vec<Trajectory>> {
    let agent = PolicyAgent {
        params,
        sampler: SamplerConfig {
            eta: cfg.eta,
            exploration: exploration.clone(),
        },
    };
    collect_trials(&agent, cfg.env_name, cfg.n_scenarios_collect, cfg.attempts_collect, seed, round)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub checkpoint_id: String,
    pub overall_sr: f64,
    pub scenario_sr: f64,
    pub mixed_fraction: f64,
    pub all_success_fraction: f64,
    pub zero_success_fraction: f64,
    pub dispersion: f64,
    pub n_kept: usize,
}

impl RoundSummary {
    pub fn of(report: &EvalReport) -> Self {
        Self {
            round: report.meta.round,
            checkpoint_id: report.meta.checkpoint_id.clone(),
            overall_sr: report.overall_sr,
            scenario_sr: report.scenario_sr,
            mixed_fraction: report.mixed_fraction,
            all_success_fraction: report.all_success_fraction,
            zero_success_fraction: report.zero_success_fraction,
            dispersion: report.dispersion,
            n_kept: report.meta.n_kept,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub seed: u64,
    pub env_name: crate::envs::EnvName,
    pub rounds: Vec<RoundSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRound {
    pub round: usize,
    pub n_seeds: usize,
    pub overall_sr: MeanStd,
    pub scenario_sr: MeanStd,
    pub mixed_fraction: MeanStd,
    pub all_success_fraction: MeanStd,
    pub zero_success_fraction: MeanStd,
    pub dispersion: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub seeds: Vec<u64>,
    pub rounds: Vec<AggregateRound>,
}

/// Mean and spread of each round's metrics across seeds.
pub fn aggregate(series: &[Series]) -> Result<Aggregate> {
    let n_rounds = series.first().map_or(0, |s| s.rounds.len());
    if series.iter().any(|s| s.rounds.len() != n_rounds) {
        return Err(Error::Config("series have differing round counts".into()));
    }
    let rounds = (0..n_rounds)
        .map(|r| {
            let col = |f: fn(&RoundSummary) -> f64| MeanStd::of(&series.iter().map(|s| f(&s.rounds[r])).collect::<Vec<_>>());
            AggregateRound {
                round: series[0].rounds[r].round,
                n_seeds: series.len(),
                overall_sr: col(|x| x.overall_sr),
                scenario_sr: col(|x| x.scenario_sr),
                mixed_fraction: col(|x| x.mixed_fraction),
                all_success_fraction: col(|x| x.all_success_fraction),
                zero_success_fraction: col(|x| x.zero_success_fraction),
                dispersion: col(|x| x.dispersion),
            }
        })
        .collect();
    Ok(Aggregate {
        seeds: series.iter().map(|s| s.seed).collect(),
        rounds,
    })
}

fn save_round(
    dir: &Path,
    checkpoint: &Checkpoint,
    report: &EvalReport,
    trials: &[Trajectory],
) -> Result<()> {
    checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
    jsonio::write_jsonl(&dir.join(TRIALS_FILE), trials)?;
    jsonio::write_json(&dir.join(REPORT_FILE), report)
}

/// Trains the initial policy for one seed and iterates
/// collect, select, retrain and evaluate. Files are written as each round
/// completes.
pub fn run_seed(cfg: &RunConfig, seed: u64, layout: &RunLayout) -> Result<Series> {
    let hash = cfg.hash()?;
    let demos = demos_for_seed(cfg, seed)?;
    jsonio::write_jsonl(&layout.demos(seed), &demos)?;
    let (mut params, _) = train_initial(&demos, cfg, seed)?;
    let mut checkpoint = Checkpoint::from_params(&params, &hash);
    let (report, trials) = evaluate(&checkpoint, cfg, seed, 0, KeptInfo::default())?;
    save_round(&layout.round_dir(seed, 0), &checkpoint, &report, &trials)?;
    let mut series = Series {
        seed,
        env_name: cfg.env_name,
        rounds: vec![RoundSummary::of(&report)],
    };
    jsonio::write_json(&layout.series(seed), &series)?;
    for round in 1..=cfg.rounds {
        let dir = layout.round_dir(seed, round);
        let collected = collect(&params, cfg, &cfg.exploration, seed, round)?;
        jsonio::write_jsonl(&dir.join(COLLECTED_FILE), &collected)?;
        let outcome = improve_round(&params, &demos, &collected, cfg, &cfg.selection, seed, round)?;
        jsonio::write_json(&dir.join(MANIFEST_FILE), &outcome.manifest)?;
        params = outcome.params;
        checkpoint = Checkpoint::from_params(&params, &hash);
        let (report, trials) = evaluate(&checkpoint, cfg, seed, round, KeptInfo::of(&outcome.manifest))?;
        save_round(&dir, &checkpoint, &report, &trials)?;
        series.rounds.push(RoundSummary::of(&report));
        jsonio::write_json(&layout.series(seed), &series)?;
    }
    Ok(series)
}

/// Full multi-round experiment over every configured seed.
pub fn run_rounds(cfg: &RunConfig, out: &Path) -> Result<Aggregate> {
    cfg.validate()?;
    let layout = RunLayout::new(out);
    cfg.save(&layout.config())?;
    let series = cfg
        .seeds
        .iter()
        .map(|&seed| run_seed(cfg, seed, &layout))
        .collect::<Result<Vec<_>>>()?;
    let agg = aggregate(&series)?;
    jsonio::write_json(&layout.aggregate(), &agg)?;
    Ok(agg)
}
