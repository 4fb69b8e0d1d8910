use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use nlslab::pipeline::{emit_report, init_threads, run_pipeline, sweep_dir, ExperimentConfig, RunManifest, Stage};
use nlslab::Error;

const DEFAULT_CONFIG: &str = "double-well-resonant";

#[derive(Parser)]
#[command(name = "nlslab", version, about = "Soliton, internal-mode and radiation-damping experiments for the cubic NLS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config file, or the name of a bundled config.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<String>,
    /// Last stage to run (pipeline only).
    #[arg(long, global = true, value_name = "NAME")]
    stage: Option<String>,
    /// Output directory; defaults to runs/<config name>.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Runs one pipeline per value of a dotted config key, in parallel.
    #[arg(long, global = true, value_name = "KEY=a,b,c")]
    sweep: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Bound states of −Δ+V.
    Spectrum,
    /// Nonlinear ground state at the working λ.
    Soliton,
    /// Internal modes and Riesz projections.
    Modes,
    /// Distorted-wave table and Γ positivity scan.
    Fgr,
    /// Normal-form coefficients, R_{m,n} and Θ tensors.
    Normalform,
    /// Effective ODE run and decay fit.
    Ode,
    /// Split-step PDE run with per-sample decomposition.
    Evolve,
    /// Decomposition of the final PDE state.
    Decompose,
    /// Regenerates report.md and report.csv from a manifest in --out.
    Report,
    /// All stages up to --stage (default: all), then the report.
    Pipeline,
}

const CONFIG_ERROR: u8 = 2;
const STAGE_ERROR: u8 = 3;

fn code(e: &Error) -> u8 {
    if e.is_config() {
        CONFIG_ERROR
    } else {
        STAGE_ERROR
    }
}

fn load(spec: Option<&str>) -> Result<ExperimentConfig, Error> {
    let spec = spec.unwrap_or(DEFAULT_CONFIG);
    let path = Path::new(spec);
    if path.exists() {
        ExperimentConfig::load(path)
    } else if ExperimentConfig::bundled_names().contains(&spec) {
        ExperimentConfig::bundled(spec)
    } else {
        Err(Error::Config(format!(
            "{spec}: no such file or bundled config (bundled: {})",
            ExperimentConfig::bundled_names().join(", ")
        )))
    }
}

fn target(cmd: Command, stage: Option<&str>) -> Result<Stage, Error> {
    Ok(match cmd {
        Command::Spectrum => Stage::Spectrum,
        Command::Soliton => Stage::Soliton,
        Command::Modes => Stage::Modes,
        Command::Fgr => Stage::Fgr,
        Command::Normalform => Stage::NormalForm,
        Command::Ode => Stage::Ode,
        Command::Evolve => Stage::Evolve,
        Command::Decompose => Stage::Decompose,
        Command::Pipeline | Command::Report => stage.map(Stage::parse).transpose()?.unwrap_or(Stage::Decompose),
    })
}

fn run_one(cfg: &ExperimentConfig, stage: Stage, out: &Path) -> u8 {
    let run = match run_pipeline(cfg, stage, Some(out)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}: {e}", cfg.name);
            return code(&e);
        }
    };
    for s in &run.manifest.stages {
        println!("{:<12} {:<10} {:>8.2} s", cfg.name, s.stage, s.seconds);
    }
    if let Err(e) = emit_report(&run.manifest, out) {
        eprintln!("{}: {e}", cfg.name);
        return STAGE_ERROR;
    }
    match run.error {
        Some(e) => {
            eprintln!("{}: {e}", cfg.name);
            code(&e)
        }
        None => {
            println!("{}: wrote {}", cfg.name, out.display());
            0
        }
    }
}

fn report(out: Option<&Path>) -> u8 {
    let Some(out) = out else {
        eprintln!("report needs --out DIR pointing at a finished run");
        return CONFIG_ERROR;
    };
    let res = RunManifest::read(&out.join("manifest.json")).and_then(|m| emit_report(&m, out));
    match res {
        Ok(()) => {
            println!("wrote {}", out.join("report.md").display());
            0
        }
        Err(e) => {
            eprintln!("{e}");
            code(&e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("{e}");
        return ExitCode::from(CONFIG_ERROR);
    }
    if let Command::Report = cli.command {
        return ExitCode::from(report(cli.out.as_deref()));
    }
    let prepared = load(cli.config.as_deref()).and_then(|mut cfg| {
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        let stage = target(cli.command, cli.stage.as_deref())?;
        Ok((cfg, stage))
    });
    let (cfg, stage) = match prepared {
        Ok(x) => x,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(code(&e));
        }
    };
    let base = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
    let Some(sweep) = cli.sweep.as_deref() else {
        return ExitCode::from(run_one(&cfg, stage, &base));
    };
    let members: Result<Vec<(ExperimentConfig, PathBuf)>, Error> = match sweep.split_once('=') {
        Some((key, values)) if !key.is_empty() && !values.is_empty() => values
            .split(',')
            .map(|v| {
                let mut c = cfg.with_override(key, v.trim())?;
                c.name = format!("{}[{key}={}]", cfg.name, v.trim());
                Ok((c, sweep_dir(&base, key, v.trim())))
            })
            .collect(),
        _ => Err(Error::Config(format!("--sweep expects KEY=a,b,c, got {sweep:?}"))),
    };
    let members = match members {
        Ok(m) => m,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(code(&e));
        }
    };
    let worst = members.par_iter().map(|(c, dir)| run_one(c, stage, dir)).max().unwrap_or(0);
    ExitCode::from(worst)
}
