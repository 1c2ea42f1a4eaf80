//! `qprobe` command-line front end: configuration, sweeps and CSV output.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::Outcome;
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "qprobe", version, about = "Precision limits for noisy phase estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Invocation {
    /// JSON configuration file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: ExperimentConfig,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// QFI and measurement CFIs of probe families through one channel.
    Qfi(Invocation),
    /// Optimal probe for one channel.
    Optimize(Invocation),
    /// Optimal-probe bifurcation scan under collective dephasing.
    Menorah(Invocation),
    /// Error curves of probe families under collective dephasing.
    Families(Invocation),
    /// Semiclassical ground state, profile and precision bounds.
    Semiclassical(Invocation),
    /// Quantum error coefficient sweep and optimal clustering.
    Cluster(Invocation),
    /// Exact vs semiclassical optimal probes under two-arm loss.
    Loss(Invocation),
    /// Entanglement thresholds of small clusters.
    Thresholds(Invocation),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Qfi(_) => "qfi",
            Command::Optimize(_) => "optimize",
            Command::Menorah(_) => "menorah",
            Command::Families(_) => "families",
            Command::Semiclassical(_) => "semiclassical",
            Command::Cluster(_) => "cluster",
            Command::Loss(_) => "loss",
            Command::Thresholds(_) => "thresholds",
        }
    }

    fn invocation(&self) -> &Invocation {
        match self {
            Command::Qfi(i)
            | Command::Optimize(i)
            | Command::Menorah(i)
            | Command::Families(i)
            | Command::Semiclassical(i)
            | Command::Cluster(i)
            | Command::Loss(i)
            | Command::Thresholds(i) => i,
        }
    }
}

/// Merges the configuration file (if any) under the flags.
pub fn resolve_config(cmd: &Command) -> CliResult<ExperimentConfig> {
    let inv = cmd.invocation();
    let base = match &inv.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(c) = &base.command {
        if c != cmd.name() {
            return Err(CliError::Config(format!("config file is for `{c}`, not `{}`", cmd.name())));
        }
    }
    let mut cfg = base.overlaid(&inv.flags);
    cfg.command = Some(cmd.name().to_string());
    Ok(cfg)
}

/// Runs one command and writes its output.
pub fn execute(cmd: &Command) -> CliResult<()> {
    let cfg = resolve_config(cmd)?;
    let run = || -> CliResult<Outcome> {
        match cmd {
            Command::Qfi(_) => commands::qfi_cmd(&cfg),
            Command::Optimize(_) => commands::optimize_cmd(&cfg),
            Command::Menorah(_) => commands::menorah_cmd(&cfg),
            Command::Families(_) => commands::families_cmd(&cfg),
            Command::Semiclassical(_) => commands::semiclassical_cmd(&cfg),
            Command::Cluster(_) => commands::cluster_cmd(&cfg),
            Command::Loss(_) => commands::loss_cmd(&cfg),
            Command::Thresholds(_) => commands::thresholds_cmd(&cfg),
        }
    };
    let outcome = match cfg.threads {
        Some(0) => return Err(CliError::Config("--threads must be positive".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    output::emit(cmd.name(), &cfg, &outcome.table, outcome.converged, &outcome.summary)?;
    if outcome.converged {
        Ok(())
    } else {
        Err(CliError::NonConvergence("some points did not converge; rows are flagged".into()))
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("qprobe: {e}");
            e.exit_code()
        }
    }
}
