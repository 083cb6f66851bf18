use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pipeline::{checkpoint_id, CHECKPOINT_FILE, TRIALS_FILE};
use super::report::{build_report, EvalReport};
use crate::envs::{verify_replay, Trajectory};
use crate::error::{Error, Result};
use crate::jsonio;
use crate::policy::Checkpoint;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub trials: usize,
    pub replayed_successes: usize,
    pub checkpoint_checked: bool,
}

fn differing_fields(a: &EvalReport, b: &EvalReport) -> Result<Vec<String>> {
    let to_value = |r: &EvalReport| {
        serde_json::to_value(r).map_err(|source| Error::Json {
            context: "report".into(),
            source,
        })
    };
    let (va, vb) = (to_value(a)?, to_value(b)?);
    let (Some(ma), Some(mb)) = (va.as_object(), vb.as_object()) else {
        return Ok(vec!["<root>".into()]);
    };
    Ok(ma.keys().filter(|k| ma.get(*k) != mb.get(*k)).cloned().collect())
}

/// Re-derives a report from its trials and compares field by field.
pub fn verify_against_trials(report: &EvalReport, trials: &[Trajectory]) -> Result<usize> {
    if let Some(t) = trials.iter().find(|t| t.round != report.meta.round) {
        return Err(Error::Verification(format!(
            "trial {} has round {} but the report is for round {}",
            t.traj_id, t.round, report.meta.round
        )));
    }
    let rebuilt = build_report(report.meta.clone(), trials, report.wall_clock_secs)?;
    if jsonio::to_line(&rebuilt)? != jsonio::to_line(report)? {
        let fields = differing_fields(report, &rebuilt)?;
        return Err(Error::Verification(format!(
            "report disagrees with its trials in: {}",
            fields.join(", ")
        )));
    }
    let mut replayed = 0;
    for t in trials {
        verify_replay(report.meta.env_name, t)?;
        replayed += usize::from(t.success);
    }
    Ok(replayed)
}

/// Checks a `report.json` against the `trials.jsonl` (and, when present,
/// the `checkpoint.json`) stored next to it.
pub fn verify_report(report_path: &Path) -> Result<VerifySummary> {
    let report: EvalReport = jsonio::read_json(report_path)?;
    let dir = report_path.parent().unwrap_or(Path::new("."));
    let trials: Vec<Trajectory> = jsonio::read_jsonl(&dir.join(TRIALS_FILE))?;
    let replayed_successes = verify_against_trials(&report, &trials)?;
    let ck_path = dir.join(CHECKPOINT_FILE);
    let checkpoint_checked = ck_path.exists();
    if checkpoint_checked {
        let id = checkpoint_id(&Checkpoint::load(&ck_path)?)?;
        if id != report.meta.checkpoint_id {
            return Err(Error::Verification(format!(
                "checkpoint id {id} does not match report's {}",
                report.meta.checkpoint_id
            )));
        }
    }
    Ok(VerifySummary {
        trials: trials.len(),
        replayed_successes,
        checkpoint_checked,
    })
}
