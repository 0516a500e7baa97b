//! Command-line experiment runner for the gpsys toolkit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod exponents;
pub mod output;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{Experiment, Failure};
use crate::config::ExperimentConfig;
use crate::exponents::ExponentRequest;

#[derive(Debug, Parser)]
#[command(name = "gpsys", version, about = "Blow-up experiments for gradient parabolic systems")]
pub struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default `out`; `exponents` writes only when given).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Multiplies every verification tolerance.
    #[arg(long = "tolerance-scale", global = true)]
    pub tolerance_scale: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the physical system to blow-up and fit the rate.
    Simulate,
    /// Evolve in similarity variables and evaluate the energy monitors.
    Rescaled,
    /// Structure, identity-convergence and subsolution suites.
    Verify,
    /// Exponent schedule and bootstrap chain.
    Exponents(ExponentArgs),
    /// All of the above into one directory.
    Report,
}

/// Values may be integers, decimals or fractions such as `7/3`.
#[derive(Debug, Args)]
pub struct ExponentArgs {
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub q: Option<String>,
    #[arg(long)]
    pub qbar: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long = "q-target")]
    pub q_target: Option<String>,
    #[arg(long = "r-target")]
    pub r_target: Option<String>,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Validation("this command needs --config PATH".into()))?;
    let (mut config, _) = ExperimentConfig::load(path).map_err(|e| Failure::Validation(format!("{e:#}")))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(t) = cli.tolerance_scale {
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure::Validation(format!("--tolerance-scale must be positive, got {t}")));
        }
        config.monitors.tolerance_scale = t;
    }
    Ok(config)
}

fn experiment(cli: &Cli) -> Result<Experiment, Failure> {
    let config = load(cli)?;
    let path = cli.config.as_ref().expect("checked by load");
    let source = std::fs::read_to_string(path).map_err(|e| Failure::Runtime(e.into()))?;
    let plan = config
        .validate(&source, &path.display().to_string(), path.parent())
        .map_err(|e| Failure::Validation(e.to_string()))?;
    Ok(Experiment { config, plan, out: cli.out.clone().unwrap_or_else(|| PathBuf::from("out")) })
}

fn exponent_request(cli: &Cli, args: &ExponentArgs) -> Result<ExponentRequest, Failure> {
    let base = match &cli.config {
        Some(_) => Some(commands::exponent_request(&load(cli)?)),
        None => None,
    };
    let pick = |flag: &Option<String>, from: Option<&Option<String>>| flag.clone().or_else(|| from.cloned().flatten());
    let p = args.p.clone().or_else(|| base.as_ref().map(|b| b.p.clone()));
    let q = args.q.clone().or_else(|| base.as_ref().map(|b| b.q.clone()));
    let (Some(p), Some(q)) = (p, q) else {
        return Err(Failure::Validation("exponents needs --p and --q, or --config".into()));
    };
    Ok(ExponentRequest {
        p,
        q,
        qbar: pick(&args.qbar, base.as_ref().map(|b| &b.qbar)),
        lambda: pick(&args.lambda, base.as_ref().map(|b| &b.lambda)),
        q_target: pick(&args.q_target, base.as_ref().map(|b| &b.q_target)),
        r_target: pick(&args.r_target, base.as_ref().map(|b| &b.r_target)),
    })
}

fn run(cli: &Cli) -> Result<String, Failure> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Validation("--threads must be at least 1".into()));
        }
        gpsys_core::par::set_threads(t).map_err(|e| Failure::Runtime(anyhow::anyhow!(e)))?;
    }
    match &cli.command {
        Command::Simulate => {
            let ex = experiment(cli)?;
            let s = commands::simulate(&ex)?;
            Ok(match (s.outcome, s.rate) {
                (gpsys_core::physical::Outcome::BlowUp(est), Some(fit)) => format!(
                    "blow-up: T_est = {:.10}, exponent = {:.6}, plateau = {:.6} (spread {:.2e})",
                    est.t_est, fit.exponent, fit.plateau, fit.plateau_spread
                ),
                (gpsys_core::physical::Outcome::BlowUp(est), None) => format!("blow-up: T_est = {:.10}", est.t_est),
                _ => "no blow-up".into(),
            })
        }
        Command::Rescaled => {
            let ex = experiment(cli)?;
            let s = commands::rescaled(&ex)?;
            Ok(format!("rescaled: {} frames, {}/{} monitor reports passed", s.frames, s.monitors_passed, s.monitors_total))
        }
        Command::Verify => {
            let ex = experiment(cli)?;
            let doc = commands::verify(&ex, ex.config.seed)?;
            Ok(if doc.convergence_inconclusive {
                "verify: passed; convergence order inconclusive (single resolution)".into()
            } else {
                "verify: passed".into()
            })
        }
        Command::Exponents(args) => {
            let req = exponent_request(cli, args)?;
            let doc = commands::exponents(&req, cli.out.as_deref().map(|d| (d, "schedule.json")))?;
            Ok(String::from_utf8(output::to_json(&doc)).expect("utf-8 JSON").trim_end().to_string())
        }
        Command::Report => {
            let ex = experiment(cli)?;
            commands::report(&ex, ex.config.seed)?;
            Ok(format!("report written to {}", ex.out.display()))
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(msg) => {
            let _ = writeln!(std::io::stdout(), "{msg}");
            0
        }
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
