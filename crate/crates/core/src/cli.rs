//! Command-line front end. Each subcommand loads a config, applies flag
//! overrides and calls one library operation.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand};

use crate::envs::Trajectory;
use crate::error::{Error, Result};
use crate::explore::ExplorationKind;
use crate::jsonio;
use crate::orchestrate::{
    collect, demos_for_seed, diversity_histogram, evaluate_with, improve_round, run_rounds, train_initial, verify_report,
    KeptInfo, RunConfig, CHECKPOINT_FILE, COLLECTED_FILE, MANIFEST_FILE, REPORT_FILE, TRIALS_FILE,
};
use crate::policy::{Checkpoint, SamplerConfig};
use crate::select::select;

#[derive(Debug, Parser)]
#[command(name = "diffimprove", version, about = "Self-improvement experiments for diffusion policies on 2D tasks")]
#[command(after_help = "Exit codes: 0 success, 1 usage error, 2 runtime error.")]
pub struct Cli {
    /// Maximum number of worker threads for rollouts.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Run config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Seed; defaults to the first seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate expert demonstrations.
    GenDemos {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the initial policy on demonstrations.
    Train {
        #[command(flatten)]
        common: Common,
        /// Demonstrations file; generated from the seed when omitted.
        #[arg(long)]
        demos: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the evaluation scenarios.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        round: usize,
        /// Exploration during evaluation (default none).
        #[arg(long)]
        exploration: Option<ExplorationKind>,
        /// Attempts per scenario; defaults to the config value.
        #[arg(long)]
        attempts: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect self trials with exploration on the collection scenarios.
    Collect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1)]
        round: usize,
        #[arg(long)]
        exploration: Option<ExplorationKind>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select training data from collected trials.
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long, default_value_t = 1)]
        round: usize,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select and retrain for one round.
    Improve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long, default_value_t = 1)]
        round: usize,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full multi-round experiment.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        exploration: Option<ExplorationKind>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute a report from its stored trials and replay them.
    VerifyReport { report: PathBuf },
    /// Histogram of per-scenario success counts.
    Diversity {
        trials: PathBuf,
        #[arg(long, default_value_t = 10)]
        trials_per_scenario: usize,
    },
}

impl clap::ValueEnum for ExplorationKind {
    fn value_variants<'a>() -> &'a [Self] {
        &[Self::None, Self::Modal, Self::ActionNoise, Self::DdimEta]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        let name = match self {
            Self::None => "none",
            Self::Modal => "modal",
            Self::ActionNoise => "action_noise",
            Self::DdimEta => "ddim_eta",
        };
        Some(clap::builder::PossibleValue::new(name))
    }
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

struct Loaded {
    cfg: RunConfig,
    seed: u64,
}

fn load(common: &Common) -> Result<Loaded, Failure> {
    if !common.config.is_file() {
        return Err(Failure::Usage(format!("config file not found: {}", common.config.display())));
    }
    let cfg = RunConfig::load(&common.config)?;
    let seed = common.seed.unwrap_or(cfg.seeds[0]);
    Ok(Loaded { cfg, seed })
}

fn finish_config(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    cfg.save(&out.join("config.toml"))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    print!("{}", jsonio::to_pretty(value)?);
    Ok(())
}

fn read_trajs(path: &Path) -> Result<Vec<Trajectory>> {
    jsonio::read_jsonl(path)
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::GenDemos { common, out } => {
            let Loaded { mut cfg, seed } = load(&common)?;
            finish_config(&mut cfg, &out)?;
            let demos = demos_for_seed(&cfg, seed)?;
            jsonio::write_jsonl(&out.join("demos.jsonl"), &demos)?;
            println!("wrote {} demonstrations", demos.len());
        }
        Command::Train { common, demos, out } => {
            let Loaded { mut cfg, seed } = load(&common)?;
            finish_config(&mut cfg, &out)?;
            let demos = match demos {
                Some(p) => read_trajs(&p)?,
                None => demos_for_seed(&cfg, seed)?,
            };
            let (params, stats) = train_initial(&demos, &cfg, seed)?;
            Checkpoint::from_params(&params, &cfg.hash()?).save(&out.join(CHECKPOINT_FILE))?;
            print_json(&stats)?;
        }
        Command::Eval { common, checkpoint, round, exploration, attempts, out } => {
            let Loaded { mut cfg, seed } = load(&common)?;
            finish_config(&mut cfg, &out)?;
            let ck = Checkpoint::load(&checkpoint)?;
            let mut sampler = cfg.eval_sampler();
            if let Some(kind) = exploration {
                sampler = SamplerConfig {
                    exploration: crate::explore::ExplorationConfig { kind, ..cfg.exploration.clone() },
                    ..sampler
                };
            }
            let attempts = attempts.unwrap_or(cfg.attempts);
            let (report, trials) = evaluate_with(&ck, &cfg, &sampler, attempts, seed, round, KeptInfo::default())?;
            ck.save(&out.join(CHECKPOINT_FILE))?;
            jsonio::write_jsonl(&out.join(TRIALS_FILE), &trials)?;
            jsonio::write_json(&out.join(REPORT_FILE), &report)?;
            println!("overall_sr {} over {} trials", report.overall_sr, report.total_attempts);
        }
        Command::Collect { common, checkpoint, round, exploration, out } => {
            let Loaded { mut cfg, seed } = load(&common)?;
            if let Some(kind) = exploration {
                cfg.exploration.kind = kind;
            }
            finish_config(&mut cfg, &out)?;
            let params = Checkpoint::load(&checkpoint)?.to_params()?;
            let trials = collect(&params, &cfg, &cfg.exploration, seed, round)?;
            jsonio::write_jsonl(&out.join(COLLECTED_FILE), &trials)?;
            println!("collected {} trials, {} successful", trials.len(), trials.iter().filter(|t| t.success).count());
        }
        Command::Select { common, demos, trials, round, theta, out } => {
            let Loaded { mut cfg, seed } = load(&common)?;
            if let Some(t) = theta {
                cfg.selection.theta = t;
            }
            finish_config(&mut cfg, &out)?;
            let key = crate::numerics::RngKey::new(seed).split("round").fold(round as u64).split("select");
            let chosen = select(&read_trajs(&demos)?, &read_trajs(&trials)?, &cfg.selection, cfg.policy.horizon, round, &key)?;
            jsonio::write_json(&out.join(MANIFEST_FILE), &chosen.manifest)?;
            jsonio::write_jsonl(&out.join("selected.jsonl"), &chosen.training_set)?;
            println!("kept {} of {} trials", chosen.manifest.n_kept, chosen.manifest.n_trials);
        }
        Command::Improve { common, checkpoint, demos, trials, round, theta, out } => {
            let Loaded { mut cfg, seed } = load(&common)?;
            if let Some(t) = theta {
                cfg.selection.theta = t;
            }
            finish_config(&mut cfg, &out)?;
            let prev = Checkpoint::load(&checkpoint)?.to_params()?;
            let outcome = improve_round(&prev, &read_trajs(&demos)?, &read_trajs(&trials)?, &cfg, &cfg.selection, seed, round)?;
            Checkpoint::from_params(&outcome.params, &cfg.hash()?).save(&out.join(CHECKPOINT_FILE))?;
            jsonio::write_json(&out.join(MANIFEST_FILE), &outcome.manifest)?;
            println!("kept {} trials; final loss {}", outcome.manifest.n_kept, outcome.train.final_loss);
        }
        Command::Run { common, rounds, exploration, theta, out } => {
            let Loaded { mut cfg, .. } = load(&common)?;
            if let Some(s) = common.seed {
                cfg.seeds = vec![s];
            }
            if let Some(r) = rounds {
                cfg.rounds = r;
            }
            if let Some(kind) = exploration {
                cfg.exploration.kind = kind;
            }
            if let Some(t) = theta {
                cfg.selection.theta = t;
            }
            let agg = run_rounds(&cfg, &out)?;
            print_json(&agg)?;
        }
        Command::VerifyReport { report } => {
            let summary = verify_report(&report)?;
            println!(
                "ok: {} trials, {} successes replayed",
                summary.trials, summary.replayed_successes
            );
        }
        Command::Diversity { trials, trials_per_scenario } => {
            print_json(&diversity_histogram(&read_trajs(&trials)?, trials_per_scenario)?)?;
        }
    }
    Ok(())
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let run = || execute(cli.command);
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(Failure::Runtime(Error::Config(format!("cannot start thread pool: {e}")))),
        },
        None => run(),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}", Cli::command().render_usage());
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}
