//! `remsim` command line: loads a run configuration, dispatches to the
//! simulation stages and writes every result with a manifest into a fresh
//! run directory.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use remsim_core::afc::ToothShape;
use remsim_core::ion_ensemble::Polarization;
use serde_json::json;

use crate::commands::{Context, EchoOverrides, Outcome, SimulateArgs};
use crate::error::{CliError, Result};
use crate::output::{Format, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "remsim", version, about = "Stark-modulated AFC memory simulator")]
pub struct Cli {
    /// Configuration directory (material.json, pipeline.json) or single JSON file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random draw; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parent directory of the run directories.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub plot: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pol {
    H,
    V,
}

impl From<Pol> for Polarization {
    fn from(p: Pol) -> Self {
        match p {
            Pol::H => Polarization::H,
            Pol::V => Polarization::V,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Gaussian,
    Square,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pump the natural ensemble into the enhanced absorption profile.
    Prepare {
        /// Pump sequence JSON to run instead of the enhanced-profile sequence.
        #[arg(long)]
        sequence: Option<PathBuf>,
    },
    /// Stark coefficient fits and antihole splitting.
    #[command(subcommand)]
    Stark(StarkCmd),
    /// Closed-form comb efficiencies and finesse fits.
    #[command(subcommand)]
    Afc(AfcCmd),
    /// Time-domain echo of a comb burnt into the prepared band.
    Echo(EchoArgs),
    /// Polarization-qubit process tomography.
    #[command(subcommand)]
    Qpt(QptCmd),
    /// prepare, comb, Stark-gated recall and tomography in one run.
    Pipeline,
    /// Render a stored artifact as SVG.
    Plot {
        artifact: PathBuf,
        #[arg(long, value_enum)]
        kind: Option<plot::PlotKind>,
    },
}

#[derive(Debug, Subcommand)]
pub enum StarkCmd {
    /// Fit both group coefficients to `field_v_per_cm,detuning_khz[,group]` data.
    Fit {
        #[arg(long)]
        data: PathBuf,
    },
    /// Split a burnt antihole with a static field.
    Split {
        #[arg(long)]
        field: Option<f64>,
        #[arg(long)]
        voltage: Option<f64>,
        #[arg(long, value_enum, default_value_t = Pol::H)]
        pol: Pol,
    },
}

#[derive(Debug, Subcommand)]
pub enum AfcCmd {
    /// Echo efficiency of order m.
    Efficiency {
        #[arg(long, value_enum, default_value_t = Model::Gaussian)]
        model: Model,
        #[arg(long)]
        d: f64,
        #[arg(long)]
        finesse: f64,
        #[arg(long, default_value_t = 1)]
        order: u32,
        #[arg(long, default_value_t = 0.0)]
        d0: f64,
    },
    /// Fit the finesse to `order,efficiency` data.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        d: f64,
        /// Starting value of the overall coupling.
        #[arg(long)]
        coupling: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct EchoArgs {
    #[arg(long, value_enum, default_value_t = Pol::H)]
    pub pol: Pol,
    #[arg(long)]
    pub voltage: Option<f64>,
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub order: Option<u32>,
    /// Plain AFC propagation without Stark gates.
    #[arg(long)]
    pub ungated: bool,
}

#[derive(Debug, Subcommand)]
pub enum QptCmd {
    /// Simulate tomography counts of a diattenuating storage channel.
    Simulate {
        #[arg(long, default_value_t = 0.070)]
        eta_h: f64,
        #[arg(long, default_value_t = 0.076)]
        eta_v: f64,
        #[arg(long)]
        phase: Option<f64>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        trials: Option<u64>,
        /// Target SNR; 0 disables noise.
        #[arg(long)]
        snr: Option<f64>,
    },
    /// Maximum-likelihood chi with Monte Carlo error bars.
    Reconstruct {
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        resamples: Option<usize>,
        /// Device efficiency for the classical bound; estimated from the counts when absent.
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Classical measure-and-prepare bound and, optionally, the sigma margin.
    Bound {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        fidelity: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Prepare { .. } => "prepare",
            Command::Stark(StarkCmd::Fit { .. }) => "stark-fit",
            Command::Stark(StarkCmd::Split { .. }) => "stark-split",
            Command::Afc(AfcCmd::Efficiency { .. }) => "afc-efficiency",
            Command::Afc(AfcCmd::Fit { .. }) => "afc-fit",
            Command::Echo(_) => "echo",
            Command::Qpt(QptCmd::Simulate { .. }) => "qpt-simulate",
            Command::Qpt(QptCmd::Reconstruct { .. }) => "qpt-reconstruct",
            Command::Qpt(QptCmd::Bound { .. }) => "qpt-bound",
            Command::Pipeline => "pipeline",
            Command::Plot { .. } => "plot",
        }
    }
}

/// Loads the configuration and runs the command without touching the disk
/// beyond reading inputs.
pub fn execute(cli: &Cli) -> Result<(Context, Outcome)> {
    let mut inputs = Vec::new();
    let mut config = config::load(cli.config.as_deref(), &mut inputs)?;
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    let mut ctx = Context {
        config,
        format: cli.format,
        plot: cli.plot,
        inputs,
    };
    let outcome = match &cli.command {
        Command::Prepare { sequence } => commands::prepare(&mut ctx, sequence.as_deref()),
        Command::Stark(StarkCmd::Fit { data }) => commands::stark_fit(&mut ctx, data),
        Command::Stark(StarkCmd::Split { field, voltage, pol }) => {
            commands::stark_split(&mut ctx, *field, *voltage, (*pol).into())
        }
        Command::Afc(AfcCmd::Efficiency {
            model,
            d,
            finesse,
            order,
            d0,
        }) => {
            let shape = match model {
                Model::Gaussian => ToothShape::Gaussian,
                Model::Square => ToothShape::Square,
            };
            commands::afc_efficiency(shape, *d, *finesse, *order, *d0)
        }
        Command::Afc(AfcCmd::Fit { data, d, coupling }) => commands::afc_fit(&mut ctx, data, *d, *coupling),
        Command::Echo(a) => commands::echo(
            &mut ctx,
            a.pol.into(),
            EchoOverrides {
                voltage: a.voltage,
                duration_ns: a.duration,
                order: a.order,
                ungated: a.ungated,
            },
        ),
        Command::Qpt(QptCmd::Simulate {
            eta_h,
            eta_v,
            phase,
            mu,
            trials,
            snr,
        }) => {
            let q = &ctx.config.qpt;
            let args = SimulateArgs {
                eta_h: *eta_h,
                eta_v: *eta_v,
                phase_rad: phase.unwrap_or(q.phase_rad),
                mu: mu.unwrap_or(q.mu),
                trials: trials.unwrap_or(q.trials),
                snr: snr.unwrap_or(q.snr),
            };
            commands::qpt_simulate(&mut ctx, args)
        }
        Command::Qpt(QptCmd::Reconstruct { counts, resamples, eta }) => {
            commands::qpt_reconstruct(&mut ctx, counts, *resamples, *eta)
        }
        Command::Qpt(QptCmd::Bound {
            mu,
            eta,
            fidelity,
            sigma,
        }) => commands::qpt_bound(*mu, *eta, *fidelity, *sigma),
        Command::Pipeline => commands::pipeline(&mut ctx),
        Command::Plot { artifact, kind } => commands::plot_file(&mut ctx, artifact, *kind),
    }?;
    Ok((ctx, outcome))
}

/// Runs a full invocation and returns the run directory.
pub fn run(cli: &Cli, command_line: Vec<String>) -> Result<(PathBuf, String)> {
    let started = output::now();
    let (ctx, outcome) = execute(cli)?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command_line,
        command: cli.command.name().to_string(),
        seed: ctx.config.seed,
        inputs: ctx.inputs.clone(),
        parameters: json!({
            "config_source": cli.config,
            "format": ctx.format,
            "plot": ctx.plot,
            "config": ctx.config,
            "command": outcome.parameters,
        }),
        outputs: Vec::new(),
        started,
        finished: String::new(),
    };
    let dir = output::persist(&cli.out, &outcome.artifacts, manifest)?;
    Ok((dir, outcome.report))
}

/// Caps the global thread pool from `REMSIM_THREADS`.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("REMSIM_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("REMSIM_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn main_with_args(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli, args) {
        Ok((dir, report)) => {
            print!("{report}");
            println!("run directory: {}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
