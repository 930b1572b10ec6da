//! The `algd` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use algd_core::verify::{self, CheckReport, GridSpec, McCheck};
use algd_core::{DualState, Guidance, RngStream};
use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand, ValueEnum};

use crate::checkpoint;
use crate::config::{self, RunConfig};
use crate::run;

#[derive(Parser, Debug)]
#[command(name = "algd", version, about = "Augmented-Lagrangian guided diffusion policies for safe RL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one agent from a TOML config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        variant: Option<Variant>,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
    },
    /// Run numerical and experimental checks.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value = "verify_out")]
        out: PathBuf,
        /// Config for the `ab` suite (defaults to the bundled point_hazard config).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of seeds for the `ab` suite.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Export energy landscapes of a checkpoint over the action square.
    Landscape {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated state, e.g. "-1.2,0,0".
        #[arg(long, allow_hyphen_values = true)]
        state: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 101)]
        resolution: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Variant {
    Standard,
    Augmented,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    All,
    Hessian,
    Boltzmann,
    Mc,
    Ab,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Train { config, seed, variant, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(v) = variant {
                cfg.train.guidance = match v {
                    Variant::Standard => Guidance::Standard,
                    Variant::Augmented => Guidance::Augmented,
                };
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let dir = cfg.output_dir.clone();
            let r = run::train(&cfg, Some(&dir))?;
            println!(
                "trained {} epochs, {} env steps, lambda {:.6}; log at {}",
                r.trainer.epoch(),
                r.trainer.env_steps(),
                r.trainer.agent.dual.lambda,
                dir.join("log.csv").display()
            );
            Ok(true)
        }
        Command::Eval { checkpoint, episodes } => {
            let e = run::evaluate_checkpoint(&checkpoint, episodes)?;
            println!("episodes {episodes}");
            println!("return {:.4} ± {:.4}", e.mean_return(), e.sd_return());
            println!("cost {:.4} ± {:.4}", e.mean_cost(), e.sd_cost());
            Ok(true)
        }
        Command::Verify { suite, out, config, seeds } => verify_suite(suite, &out, config.as_deref(), seeds),
        Command::Landscape {
            checkpoint,
            state,
            out,
            resolution,
        } => {
            let ck = checkpoint::load(&checkpoint)?;
            let s = run::parse_state(&state)?;
            let grid = GridSpec::new((-1.0, 1.0), (-1.0, 1.0), resolution)?;
            let report = run::export_landscape(&ck.agent, &s, &grid, &out)?;
            print_report(&report);
            Ok(report.pass)
        }
    }
}

fn print_report(r: &CheckReport) {
    let status = if r.pass { "PASS" } else { "FAIL" };
    let metrics: Vec<String> = r.metrics.iter().map(|(l, v)| format!("{l}={v:.6}")).collect();
    println!("{status} {} {}", r.name, metrics.join(" "));
    if let Some(p) = &r.artifact_path {
        println!("     data: {p}");
    }
}

/// Built-in desk-scale point_hazard configuration used by `verify --suite ab`.
pub fn bundled_point_hazard() -> RunConfig {
    config::RunConfig::from_toml_str(include_str!("../configs/point_hazard.toml")).expect("bundled config is valid")
}

fn verify_suite(suite: Suite, out: &Path, config: Option<&Path>, seeds: u64) -> Result<bool> {
    let want = |s: Suite| suite == Suite::All || suite == s;
    let mut reports = Vec::new();
    if want(Suite::Hessian) {
        let dual = DualState::new(0.7, 1.0, 0.5, 0.01)?;
        let mut rng = RngStream::new(0, 0);
        reports.push(verify::check_hessian_gap(&dual, &GridSpec::default(), 50, &mut rng)?);
    }
    if want(Suite::Boltzmann) {
        reports.push(verify::check_boltzmann_invariance(0.7, 1.0, 0.5, &GridSpec::default(), 0.1)?);
    }
    if want(Suite::Mc) {
        let mut rng = RngStream::new(0, 0);
        reports.push(verify::check_mc_convergence(&McCheck::default(), &mut rng)?);
    }
    if want(Suite::Ab) {
        let cfg = match config {
            Some(p) => RunConfig::load(p)?,
            None => bundled_point_hazard(),
        };
        if seeds == 0 {
            return Err(anyhow!("--seeds must be positive"));
        }
        let seed_list: Vec<u64> = (0..seeds).collect();
        let outcome = run::ab_stability_experiment(&cfg, &seed_list, Some(&out.join("ab_runs")))?;
        reports.push(outcome.ordering);
        reports.push(outcome.end_state);
    }
    let mut all = true;
    for r in &mut reports {
        run::write_report(r, out)?;
        print_report(r);
        all &= r.pass;
    }
    Ok(all)
}
