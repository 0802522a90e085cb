//! Command-line surface: `run` for a whole experiment, or one subcommand
//! per stage working inside the same run directory.

pub mod config;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
pub use config::ExperimentConfig;
pub use pipeline::{run_experiment, RunDir, RunManifest, RunOutcome, Selection};
use pipeline::{load_log, load_plans, run_stage};

#[derive(Debug, Parser)]
#[command(name = "rental-triage", version, about = "Risk ranking for proactive rental assistance")]
pub struct Cli {
    /// Experiment config (TOML); defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `k`.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Restrict train/evaluate to one split.
    #[arg(long, global = true)]
    pub split_id: Option<usize>,
    /// Restrict train/evaluate to one learner family, or `baseline`.
    #[arg(long, global = true)]
    pub model_family: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// All stages from generate through report.
    Run,
    /// Simulate a population into the run directory.
    Generate,
    /// Load an event log and report rejected rows.
    Ingest {
        /// Event log directory to read instead of the run's own data.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    PlanSplits,
    Train,
    Evaluate,
    Report,
    /// Freeze lists at the configured dates and score them later.
    Shadow,
    /// Simulate the configured randomized trial.
    Rct,
    /// Print the effective config.
    ShowConfig,
}

impl Cli {
    /// The config file with command-line overrides applied.
    pub fn resolve_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn selection(&self) -> Selection {
        Selection { split_id: self.split_id, model_family: self.model_family.clone() }
    }
}

fn summarize(lines: &mut Vec<String>, label: &str, value: impl std::fmt::Display) {
    lines.push(format!("{label}: {value}"));
}

/// Runs the parsed command and returns the lines to print.
pub fn execute(cli: &Cli) -> Result<Vec<String>> {
    let cfg = cli.resolve_config().map_err(|e| Error::Stage { stage: "config".into(), source: Box::new(e) })?;
    let dir = RunDir::new(&cfg.out_dir);
    let mut lines = Vec::new();
    if let Command::Run = cli.command {
        let out = run_experiment(&cfg)?;
        summarize(&mut lines, "splits", out.plans.len());
        summarize(&mut lines, "reports", out.reports.len());
        for m in &out.summary {
            lines.push(format!("{:<40} precision@{} avg {:.3}", m.model_id, cfg.k, m.precision.avg));
        }
        summarize(&mut lines, "run directory", dir.root.display());
        return Ok(lines);
    }
    if let Command::ShowConfig = cli.command {
        lines.push(cfg.to_toml()?);
        return Ok(lines);
    }
    let mut manifest = RunManifest::open(&dir, &cfg)?;
    run_stage(&mut manifest, &dir, "config", |io| Ok(std::fs::write(io.output(&dir.config())?, cfg.to_toml()?)?))?;
    let sel = cli.selection();
    match &cli.command {
        Command::Generate => {
            let (log, truth) = run_stage(&mut manifest, &dir, "generate", |io| pipeline::generate(&cfg, io))?;
            summarize(&mut lines, "records", log.records().len());
            summarize(&mut lines, "eviction episodes", truth.episodes.len());
        }
        Command::Ingest { data } => {
            let (log, report) = run_stage(&mut manifest, &dir, "ingest", |io| pipeline::ingest(data.as_deref(), io))?;
            summarize(&mut lines, "records", log.records().len());
            summarize(&mut lines, "accepted", report.accepted);
            summarize(&mut lines, "duplicates", report.duplicates);
            summarize(&mut lines, "rejected", report.rejected.len());
        }
        Command::PlanSplits => {
            let plans = run_stage(&mut manifest, &dir, "plan-splits", |io| {
                let log = load_log(io)?;
                pipeline::plan(&cfg, &log, io)
            })?;
            for p in &plans {
                let flag = if p.moratorium_overlap { " (moratorium)" } else { "" };
                lines.push(format!("split {}: eval {} with {} training dates{flag}", p.id, p.eval_as_of, p.train_as_ofs.len()));
            }
        }
        Command::Train => {
            let n = run_stage(&mut manifest, &dir, "train", |io| {
                let log = load_log(io)?;
                let plans = load_plans(io)?;
                pipeline::train(&cfg, &log, &plans, &sel, io)
            })?;
            summarize(&mut lines, "prediction files", n);
        }
        Command::Evaluate => {
            let reports = run_stage(&mut manifest, &dir, "evaluate", |io| {
                let log = load_log(io)?;
                let plans = load_plans(io)?;
                pipeline::evaluate(&cfg, &log, &plans, &sel, io)
            })?;
            for r in &reports {
                lines.push(format!("split {} {:<40} precision@{} {:.3}", r.split_id, r.model_id, r.k, r.precision_at_k));
            }
        }
        Command::Report => {
            let summary = run_stage(&mut manifest, &dir, "report", |io| {
                let plans = load_plans(io)?;
                pipeline::report(&cfg, &plans, io)
            })?;
            for m in &summary {
                lines.push(format!("{:<40} precision@{} avg {:.3} over {} splits", m.model_id, cfg.k, m.precision.avg, m.splits));
            }
        }
        Command::Shadow => {
            let runs = run_stage(&mut manifest, &dir, "shadow", |io| {
                let log = load_log(io)?;
                pipeline::shadow(&cfg, &log, io)
            })?;
            for r in &runs {
                lines.push(format!(
                    "{} {}: {} of {} became homeless, {} from the missed group",
                    r.freeze_date, r.model_id, r.true_positives, r.k, r.missed_found
                ));
            }
        }
        Command::Rct => {
            let reports = run_stage(&mut manifest, &dir, "rct", |io| pipeline::rct(&cfg, io))?;
            for (i, arm) in reports[0].arms.iter().enumerate() {
                let covered = reports.iter().filter(|r| r.arms[i].effect.covers(r.arms[i].true_effect, 2.0)).count();
                lines.push(format!(
                    "{}: n {} effect {:.4} (se {:.4}), truth covered in {covered} of {} replications",
                    arm.name,
                    arm.n,
                    arm.effect.estimate,
                    arm.effect.se,
                    reports.len()
                ));
            }
        }
        Command::Run | Command::ShowConfig => unreachable!(),
    }
    Ok(lines)
}

/// Entry point for the binary.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests;
