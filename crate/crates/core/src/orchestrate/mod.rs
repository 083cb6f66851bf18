//! Evaluation and collection protocol, the improvement loop, reports and
//! their verification.

mod config;
mod experiment;
mod pipeline;
mod protocol;
mod report;
mod verify;

pub use config::{sha256_hex, RunConfig};
pub use experiment::{single_round_study, standard_arms, ArmResult, Arm, StudyResult};
pub use pipeline::{
    aggregate, checkpoint_id, collect, demos_for_seed, evaluate, evaluate_with, improve_round, run_rounds, run_seed,
    train_initial, Aggregate, AggregateRound, KeptInfo, MeanStd, RoundOutcome, RoundSummary, RunLayout, Series,
    CHECKPOINT_FILE, COLLECTED_FILE, MANIFEST_FILE, REPORT_FILE, TRIALS_FILE,
};
pub use protocol::{attempt_key, collect_trials, evaluate_trials, run_trials, scenario_ids, traj_id, Agent, PolicyAgent};
pub use report::{build_report, diversity_histogram, DiversityHistogram, EvalReport, ReportMeta, ScenarioOutcome};
pub use verify::{verify_against_trials, verify_report, VerifySummary};
