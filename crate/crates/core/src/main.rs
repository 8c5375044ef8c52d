use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wick_galerkin::experiments::{self, ExperimentConfig, ExperimentKind, PRESETS};

/// Stochastic Galerkin and Monte Carlo experiments for elliptic equations
/// with log-normal coefficients.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Source {
    /// TOML config, or the manifest.json of an earlier run.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Use a built-in config instead (see `list-experiments`).
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV files and manifest.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output root; overrides the config and the environment.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Elements per axis.
        #[arg(long)]
        cells: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Monte Carlo sample count.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Parse and check a config without computing anything.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// List experiment kinds and built-in presets.
    ListExperiments,
}

fn load(source: &Source) -> wick_galerkin::Result<ExperimentConfig> {
    match (&source.config, &source.preset) {
        (Some(path), _) => ExperimentConfig::load(path),
        (None, Some(name)) => ExperimentConfig::preset(name),
        (None, None) => unreachable!("clap requires one of them"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::ListExperiments => {
            println!("kinds:");
            for k in ExperimentKind::ALL {
                println!("  {:<22} {}", k.name(), k.description());
            }
            println!("presets:");
            for (name, text) in PRESETS {
                let kind = ExperimentConfig::from_toml(text).map(|c| c.kind.name()).unwrap_or("?");
                println!("  {name:<22} {kind}");
            }
            Ok(())
        }
        Command::Validate { source } => load(&source).and_then(|cfg| {
            cfg.validate()?;
            println!(
                "{}: {} ({} rows)",
                cfg.name.as_deref().unwrap_or("config"),
                cfg.kind.name(),
                cfg.expanded_cases().len()
            );
            Ok(())
        }),
        Command::Run {
            source,
            output,
            seed,
            cells,
            tol,
            max_iter,
            samples,
        } => load(&source).and_then(|mut cfg| {
            if let Some(o) = output {
                cfg.output_dir = Some(o);
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(c) = cells {
                cfg.mesh.cells = c;
            }
            if let Some(t) = tol {
                cfg.solver.tol = t;
            }
            if let Some(m) = max_iter {
                cfg.solver.max_iter = m;
            }
            if let (Some(n), Some(mc)) = (samples, cfg.mc.as_mut()) {
                mc.n_samples = n;
            }
            let (result, dir) = experiments::run(&cfg, |i, n, t| eprintln!("row {}/{n} done in {t:.2} s", i + 1))?;
            let failed = result.infos().iter().filter(|i| i.error.is_some()).count();
            println!("wrote {}", dir.display());
            if failed > 0 {
                println!("{failed} row(s) failed; see the error column");
            }
            Ok(())
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
