use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::LevelFilter;
use reducing_atlas_cli::{exit, output, pipeline, CliError, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "reducing-atlas", version, about = "Monodromy atlas, convolution algebra and reducing subspaces of a Blaschke product symbol")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true, default_value = "warn")]
    log_level: LevelFilter,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (JSON).
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Monodromy, pair-orbit atlas and convolution algebra.
    Analyze(Common),
    /// Analyze, then run the Bergman-space residual suite.
    Verify(Common),
    /// Run the stages listed in the config (or `--stage`) and write all artifacts.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long = "stage", value_enum)]
        stages: Vec<Stage>,
    },
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let (common, stages) = match cli.command {
        Command::Analyze(c) => (c, Some(vec![Stage::Analyze])),
        Command::Verify(c) => (c, Some(vec![Stage::Analyze, Stage::Verify])),
        Command::Report { common, stages } => (common, (!stages.is_empty()).then_some(stages)),
    };
    let cfg = RunConfig::load(&common.config)?;
    let stages = stages.unwrap_or_else(|| cfg.stages.clone());
    let dir = common.out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    let outcome = pipeline::run(&cfg, &stages)?;
    for path in output::write_outputs(&dir, &outcome)? {
        log::info!("wrote {}", path.display());
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::IO_OR_CONFIG as u8 } else { 0 });
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    let code = match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
