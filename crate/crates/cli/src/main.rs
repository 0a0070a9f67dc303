use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use microscale_id::commands::{self, Run};
use microscale_id::{CliError, ExperimentConfig};

/// Two-stage identification of porous microstructure from cantilever
/// deflections.
#[derive(Parser)]
#[command(name = "microscale-id", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML); missing keys take their defaults.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Replaces the noise seed.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Print per-iteration progress on stderr.
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Args)]
struct Micro {
    /// RVE overrides of the `[reference]` section.
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    vf: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    raster_n: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Homogenize the reference RVE and write noisy cantilever measurements.
    Synthesize(Common),
    /// Stage 1: fit (λ, μ, l) to measurements.
    IdentifyMacro {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out>/measurements.csv`.
        #[arg(long)]
        measurements: Option<PathBuf>,
    },
    /// Stage 2: fit (φ, vf) to the tangents implied by an identified α.
    IdentifyMicro {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out>/alpha.csv`.
        #[arg(long)]
        alpha: Option<PathBuf>,
    },
    /// synthesize, identify-macro and identify-micro in one go.
    Pipeline(Common),
    /// Write the homogenized tangents of one RVE.
    Homogenize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        micro: Micro,
    },
    /// Write the circle packing and image of one RVE.
    Rve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        micro: Micro,
    },
}

fn prepare(common: &Common, micro: Option<&Micro>) -> Result<Run, CliError> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(m) = micro {
        let r = &mut config.reference;
        r.phi = m.phi.unwrap_or(r.phi);
        r.vf = m.vf.unwrap_or(r.vf);
        r.seed = m.seed.unwrap_or(r.seed);
        r.raster_n = m.raster_n.unwrap_or(r.raster_n);
    }
    let mut run = Run::new(config, common.out.clone(), common.threads, common.seed_override)?;
    run.verbose = common.verbose;
    Ok(run)
}

fn execute(cli: Cli) -> Result<PathBuf, CliError> {
    match cli.command {
        Command::Synthesize(c) => {
            let run = prepare(&c, None)?;
            commands::cmd_synthesize(&run)?;
            Ok(run.out)
        }
        Command::IdentifyMacro { common, measurements } => {
            let run = prepare(&common, None)?;
            let path = measurements.unwrap_or_else(|| run.path(commands::MEASUREMENTS));
            commands::cmd_identify_macro(&run, &path)?;
            Ok(run.out)
        }
        Command::IdentifyMicro { common, alpha } => {
            let run = prepare(&common, None)?;
            let path = alpha.unwrap_or_else(|| run.path(commands::ALPHA));
            commands::cmd_identify_micro(&run, &path)?;
            Ok(run.out)
        }
        Command::Pipeline(c) => {
            let run = prepare(&c, None)?;
            commands::cmd_pipeline(&run)?;
            Ok(run.out)
        }
        Command::Homogenize { common, micro } => {
            let run = prepare(&common, Some(&micro))?;
            commands::cmd_homogenize(&run)?;
            Ok(run.out)
        }
        Command::Rve { common, micro } => {
            let run = prepare(&common, Some(&micro))?;
            commands::cmd_rve(&run)?;
            Ok(run.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(out) => {
            eprintln!("done; results in {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
