use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use riccati_attitude::harness::{run_observability, run_scenario, summary_text, RunSummary};
use riccati_attitude::scenario::{preset, Scenario, PRESETS};

#[derive(Parser)]
#[command(name = "riccati-sim", version, about = "Riccati attitude and velocity observers: simulation and observability analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario described by a TOML file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run a built-in scenario.
    Preset {
        name: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Observability analysis only, for a TOML file or a preset.
    Observability {
        #[arg(required_unless_present = "preset", conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Print a built-in scenario as TOML.
    DumpPreset { name: String },
    /// List the built-in scenarios.
    Presets,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Args)]
struct RunOpts {
    /// Directory for CSV, summary and plot artifacts.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Skip writing artifacts.
    #[arg(long, conflicts_with = "out_dir")]
    no_output: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Disable sensor noise.
    #[arg(long)]
    no_noise: bool,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Drop the magnetometer from observers and analysis.
    #[arg(long)]
    ablate_mag: bool,
    /// Override the simulation horizon (s).
    #[arg(long)]
    horizon: Option<f64>,
}

impl RunOpts {
    fn apply(&self, scn: &mut Scenario) {
        if let Some(seed) = self.seed {
            scn.sensors.seed = seed;
        }
        if self.no_noise {
            scn.sensors.noise_enabled = false;
        }
        match self.variant {
            Some(VariantArg::One) => scn.variants = vec![1],
            Some(VariantArg::Two) => scn.variants = vec![2],
            Some(VariantArg::Both) => scn.variants = vec![1, 2],
            None => {}
        }
        if self.ablate_mag {
            scn.observability.ablate_mag = true;
        }
        if let Some(h) = self.horizon {
            scn.horizon = h;
        }
    }

    fn out_dir(&self, scn: &Scenario) -> Option<PathBuf> {
        if self.no_output {
            return None;
        }
        Some(
            self.out_dir
                .clone()
                .or_else(|| scn.output_dir.clone())
                .unwrap_or_else(|| Path::new("output").join(&scn.name)),
        )
    }
}

fn load(path: &Path) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading {}", path.display()))
}

fn finish(scn: &Scenario, summary: &RunSummary) -> ExitCode {
    print!("{}", summary_text(scn, summary));
    if let Some(dir) = &summary.output_dir {
        println!("\nartifacts: {}", dir.display());
    }
    if summary.passed() {
        ExitCode::SUCCESS
    } else {
        eprintln!("one or more checks failed");
        ExitCode::from(1)
    }
}

fn simulate(mut scn: Scenario, opts: &RunOpts, observability_only: bool) -> Result<ExitCode> {
    opts.apply(&mut scn);
    scn.validate()?;
    let dir = opts.out_dir(&scn);
    if let Some(d) = &dir {
        std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    let summary = if observability_only {
        if !scn.observability.enabled && !scn.observability.ablate_mag {
            scn.observability.enabled = true;
        }
        run_observability(&scn, dir.as_deref())?
    } else {
        run_scenario(&scn, dir.as_deref())?
    };
    Ok(finish(&scn, &summary))
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, opts } => simulate(load(&config)?, &opts, false),
        Command::Preset { name, opts } => simulate(preset(&name)?, &opts, false),
        Command::Observability { config, preset: name, opts } => {
            let scn = match (config, name) {
                (Some(path), _) => load(&path)?,
                (None, Some(name)) => preset(&name)?,
                (None, None) => bail!("give a config file or --preset"),
            };
            simulate(scn, &opts, true)
        }
        Command::DumpPreset { name } => {
            print!("{}", preset(&name)?.to_toml());
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets => {
            for p in PRESETS {
                println!("{p}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
