//! `dse`: design, verify, simulate and reconfigure distributed set-based
//! state estimators.
//!
//! Exit codes: 0 success, 2 the design procedure stopped as designed (or a
//! plug-in was rejected), 1 any other error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dse_core::design::{
    design, plug_in, unplug, verify_design, DesignConfig, DesignError, DesignReport, GeneratorChoice,
    InitPolicy, NetworkModel,
};
use dse_core::formats;
use dse_core::observer::CouplingMode;
use dse_core::powergrid::{build_scenario, Scenario, BUILTIN_SCENARIOS};
use dse_core::simulation::{simulate, DisturbanceMode, SimulationConfig};

#[derive(Parser)]
#[command(name = "dse", version, about = "Distributed set-based state estimator design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Frobenius,
    DirectMu,
}

#[derive(Clone, Copy, ValueEnum)]
enum DisturbanceArg {
    None,
    Uniform,
}

#[derive(Subcommand)]
enum Command {
    /// Build a model file from a shipped scenario name or a scenario config file.
    Scenario {
        /// example1, example2, example3, or a path to a scenario JSON file.
        source: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Design local estimators and certify the set family.
    Design {
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Frobenius)]
        mode: ModeArg,
    },
    /// Simulate plant and estimators, writing a CSV trace and printing a JSON summary.
    Simulate {
        model: PathBuf,
        design: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = DisturbanceArg::None)]
        disturbance: DisturbanceArg,
        #[arg(long)]
        out: PathBuf,
        /// Also write the JSON summary to this file.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Initial scaling factors as a fraction of the inner-box corner.
        #[arg(long, default_value_t = 1.0)]
        init_fraction: f64,
        /// Generator of each contractive set used for the initial error:
        /// `first`, `random`, or a generator index.
        #[arg(long, default_value = "first")]
        generator: String,
    },
    /// Add a subsystem described by a plug-in request file.
    Plugin {
        model: PathBuf,
        design: PathBuf,
        request: PathBuf,
        #[arg(long)]
        out_model: PathBuf,
        #[arg(long)]
        out_design: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Remove subsystem `--sub` and check the reduced scaling-factor system.
    Unplug {
        model: PathBuf,
        design: PathBuf,
        #[arg(long)]
        sub: usize,
        #[arg(long)]
        out_model: PathBuf,
        #[arg(long)]
        out_design: PathBuf,
        /// Recompute the reduced maximal invariant set instead of slicing.
        #[arg(long)]
        refresh: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sampled invariance check of a design; exit 0 iff every condition holds.
    Verify {
        model: PathBuf,
        design: PathBuf,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Outcome of a command that ran without an error.
enum Outcome {
    Ok,
    Stopped,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> Result<NetworkModel> {
    formats::model_from_json(&read(path)?).with_context(|| format!("parsing model {}", path.display()))
}

fn load_design(path: &Path) -> Result<DesignReport> {
    formats::design_from_json(&read(path)?).with_context(|| format!("parsing design {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn mode(m: ModeArg) -> CouplingMode {
    match m {
        ModeArg::Frobenius => CouplingMode::Frobenius,
        ModeArg::DirectMu => CouplingMode::DirectMu,
    }
}

fn parse_generator(text: &str) -> Result<GeneratorChoice> {
    Ok(match text {
        "first" => GeneratorChoice::First,
        "random" => GeneratorChoice::Random,
        other => GeneratorChoice::Index(
            other
                .parse()
                .with_context(|| format!("invalid generator choice {other:?}"))?,
        ),
    })
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Scenario { source, out } => {
            let scenario = if BUILTIN_SCENARIOS.contains(&source.as_str()) {
                Scenario::builtin(&source)?
            } else {
                Scenario::from_json(&read(Path::new(&source))?)
                    .with_context(|| format!("parsing scenario {source}"))?
            };
            for w in scenario.warnings() {
                eprintln!("warning: {w}");
            }
            let model = build_scenario(&scenario)?;
            write(&out, &formats::model_to_json(&model))?;
            Ok(Outcome::Ok)
        }
        Command::Design { model, out, mode: m } => {
            let model = load_model(&model)?;
            let config = DesignConfig {
                mode: mode(m),
                ..DesignConfig::default()
            };
            let report = design(&model, &config)?;
            write(&out, &formats::design_to_json(&report))?;
            println!("status: {}", report.status);
            if let Some(ts) = &report.theta_system {
                println!("rho(T) = {}", ts.spectral_radius);
            }
            Ok(if report.status.is_success() {
                Outcome::Ok
            } else {
                Outcome::Stopped
            })
        }
        Command::Simulate {
            model,
            design: design_path,
            steps,
            seed,
            disturbance,
            out,
            summary,
            init_fraction,
            generator,
        } => {
            let model = load_model(&model)?;
            let report = load_design(&design_path)?;
            if !report.status.is_success() {
                eprintln!("design did not succeed: {}", report.status);
                return Ok(Outcome::Stopped);
            }
            let mut config = SimulationConfig::new(usize::try_from(steps)?, seed);
            config.disturbance = match disturbance {
                DisturbanceArg::None => DisturbanceMode::None,
                DisturbanceArg::Uniform => DisturbanceMode::Uniform,
            };
            config.init = InitPolicy {
                fraction: init_fraction,
                generator: parse_generator(&generator)?,
            };
            let trace = simulate(&model, &report, &config)?;
            write(&out, &trace.to_csv())?;
            let s = trace.summary();
            let text = format!("{}\n", serde_json::to_string_pretty(&s)?);
            if let Some(path) = summary {
                write(&path, &text)?;
            }
            print!("{text}");
            if s.violations > 0 {
                bail!("{} constraint violations in the trace", s.violations);
            }
            Ok(Outcome::Ok)
        }
        Command::Plugin {
            model,
            design: design_path,
            request,
            out_model,
            out_design,
            mode: m,
        } => {
            let model = load_model(&model)?;
            let report = load_design(&design_path)?;
            let request = formats::plugin_from_json(&read(&request)?)
                .with_context(|| format!("parsing plug-in request {}", request.display()))?;
            let config = DesignConfig {
                mode: m.map_or(report.mode, mode),
                ..DesignConfig::default()
            };
            match plug_in(&report, &model, &request, &config) {
                Ok((m2, r2)) => {
                    write(&out_model, &formats::model_to_json(&m2))?;
                    write(&out_design, &formats::design_to_json(&r2))?;
                    println!("status: {}", r2.status);
                    Ok(Outcome::Ok)
                }
                Err(DesignError::PlugInRejected(status)) => {
                    println!("plug-in rejected: {status}");
                    Ok(Outcome::Stopped)
                }
                Err(DesignError::NotSuccessful(status)) => {
                    eprintln!("design did not succeed: {status}");
                    Ok(Outcome::Stopped)
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Unplug {
            model,
            design: design_path,
            sub,
            out_model,
            out_design,
            refresh,
            seed,
        } => {
            let model = load_model(&model)?;
            let report = load_design(&design_path)?;
            if !report.status.is_success() {
                eprintln!("design did not succeed: {}", report.status);
                return Ok(Outcome::Stopped);
            }
            let out = unplug(&report, &model, sub, refresh, seed)?;
            write(&out_model, &formats::model_to_json(&out.model))?;
            write(&out_design, &formats::design_to_json(&out.report))?;
            if let Some(w) = &out.check.warning {
                eprintln!("warning: {w}");
            }
            print_json(&out.check)?;
            if !out.check.all_passed() {
                bail!("reduced design failed its numerical checks");
            }
            Ok(Outcome::Ok)
        }
        Command::Verify {
            model,
            design: design_path,
            samples,
            seed,
        } => {
            let model = load_model(&model)?;
            let report = load_design(&design_path)?;
            if !report.status.is_success() {
                eprintln!("design did not succeed: {}", report.status);
                return Ok(Outcome::Stopped);
            }
            let r = verify_design(&model, &report, samples, seed)?;
            println!("samples checked: {}", r.samples_checked);
            println!("(a) error bound   worst margin {}", r.worst_margin_error_bound);
            println!("(b) propagation   worst margin {}", r.worst_margin_propagation);
            println!("(c) theta in set  worst margin {}", r.worst_margin_theta);
            for v in &r.violations {
                let at = v.subsystem.map_or_else(String::new, |i| format!(" subsystem {i}"));
                println!(
                    "violation: {:?}{at} margin {} at theta {:?}",
                    v.condition, v.margin, v.theta
                );
            }
            if r.passed {
                println!("pass");
                Ok(Outcome::Ok)
            } else {
                bail!("verification failed");
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Stopped) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
