use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::pipeline::{collect, demos_for_seed, evaluate, evaluate_with, improve_round, train_initial, KeptInfo};
use super::report::{diversity_histogram, DiversityHistogram, EvalReport};
use crate::error::Result;
use crate::explore::{ExplorationConfig, ExplorationKind};
use crate::policy::{Checkpoint, SamplerConfig};
use crate::select::SelectionConfig;

/// One way of producing and selecting self data for a single round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub exploration: ExplorationConfig,
    pub selection: SelectionConfig,
}

/// Modal exploration with selection, no exploration with the same
/// selection, and modal exploration training on every trial.
pub fn standard_arms(cfg: &RunConfig) -> Vec<Arm> {
    let modal = ExplorationConfig {
        kind: ExplorationKind::Modal,
        ..cfg.exploration.clone()
    };
    vec![
        Arm {
            name: "modal".into(),
            exploration: modal.clone(),
            selection: cfg.selection.clone(),
        },
        Arm {
            name: "baseline".into(),
            exploration: ExplorationConfig::none(),
            selection: cfg.selection.clone(),
        },
        Arm {
            name: "no_selection".into(),
            exploration: modal,
            selection: SelectionConfig {
                inter_demo: false,
                ..cfg.selection.clone()
            },
        },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub name: String,
    pub n_kept: usize,
    pub collected_sr: f64,
    pub report: EvalReport,
}

impl ArmResult {
    pub fn gain_over(&self, initial: &EvalReport) -> f64 {
        self.report.overall_sr - initial.overall_sr
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub seed: u64,
    pub initial: EvalReport,
    pub diversity_plain: DiversityHistogram,
    pub diversity_modal: DiversityHistogram,
    pub arms: Vec<ArmResult>,
}

impl StudyResult {
    pub fn arm(&self, name: &str) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.name == name)
    }
}

/// Diversity of the initial policy with and without modal exploration,
/// then one improvement round per arm from the same initial policy. All
/// arms share the same training budget.
pub fn single_round_study(cfg: &RunConfig, seed: u64, arms: &[Arm], diversity_trials: usize) -> Result<StudyResult> {
    let demos = demos_for_seed(cfg, seed)?;
    let (params, _) = train_initial(&demos, cfg, seed)?;
    let hash = cfg.hash()?;
    let checkpoint = Checkpoint::from_params(&params, &hash);
    let (initial, _) = evaluate(&checkpoint, cfg, seed, 0, KeptInfo::default())?;

    let modal = SamplerConfig {
        eta: cfg.eta,
        exploration: ExplorationConfig {
            kind: ExplorationKind::Modal,
            ..cfg.exploration.clone()
        },
    };
    let (_, plain_trials) = evaluate_with(&checkpoint, cfg, &cfg.eval_sampler(), diversity_trials, seed, 0, KeptInfo::default())?;
    let (_, modal_trials) = evaluate_with(&checkpoint, cfg, &modal, diversity_trials, seed, 0, KeptInfo::default())?;

    let mut collected: Vec<(ExplorationConfig, Vec<crate::envs::Trajectory>)> = Vec::new();
    let mut results = Vec::with_capacity(arms.len());
    for arm in arms {
        let idx = match collected.iter().position(|(e, _)| *e == arm.exploration) {
            Some(i) => i,
            None => {
                collected.push((arm.exploration.clone(), collect(&params, cfg, &arm.exploration, seed, 1)?));
                collected.len() - 1
            }
        };
        let trials = &collected[idx].1;
        let outcome = improve_round(&params, &demos, trials, cfg, &arm.selection, seed, 1)?;
        let ck = Checkpoint::from_params(&outcome.params, &hash);
        let (report, _) = evaluate(&ck, cfg, seed, 1, KeptInfo::of(&outcome.manifest))?;
        results.push(ArmResult {
            name: arm.name.clone(),
            n_kept: outcome.manifest.n_kept,
            collected_sr: trials.iter().filter(|t| t.success).count() as f64 / trials.len() as f64,
            report,
        });
    }
    Ok(StudyResult {
        seed,
        initial,
        diversity_plain: diversity_histogram(&plain_trials, diversity_trials)?,
        diversity_modal: diversity_histogram(&modal_trials, diversity_trials)?,
        arms: results,
    })
}
