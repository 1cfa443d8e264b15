use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ssf_cli::config::{GatewayMode, Overrides, RunConfig};
use ssf_cli::pipeline::{Pipeline, Stage};
use ssf_cli::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "ssf",
    about = "Builds community story-frame profiles from conversation corpora",
    version
)]
struct Cli {
    /// Run configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the configured model backend.
    #[arg(long, global = true, value_enum)]
    gateway: Option<GatewayChoice>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GatewayChoice {
    Mock,
    Http,
}

impl From<GatewayChoice> for GatewayMode {
    fn from(choice: GatewayChoice) -> Self {
        match choice {
            GatewayChoice::Mock => GatewayMode::Mock,
            GatewayChoice::Http => GatewayMode::Http,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build and validate conversation graphs from the corpus.
    Ingest,
    /// Filter scored stories and construct splits and the annotation
    /// sample.
    Curate,
    /// Summarize story contexts and community descriptions.
    Summarize,
    /// Generate structured story inferences for sampled stories.
    Generate,
    /// Classify generated inferences into taxonomy sublabels.
    Classify,
    /// Compute distributions, co-occurrence, entropy, and community
    /// similarity.
    Analyze,
    /// Filter human ratings and score agreement against gold labels.
    Validate,
    /// Bundle run results into a single report.
    Report,
    /// Run every enabled stage in order.
    Run {
        /// Run only this stage.
        #[arg(long)]
        stage: Option<String>,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Validation("--config is required".to_string()))?;
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        gateway: cli.gateway.map(GatewayMode::from),
    };
    let config = RunConfig::load(config_path, &overrides)?;
    let pipeline = Pipeline::new(config)?;
    match cli.command {
        Command::Ingest => pipeline.run(Stage::Ingest).map(drop),
        Command::Curate => pipeline.run(Stage::Curate).map(drop),
        Command::Summarize => pipeline.run(Stage::Summarize).map(drop),
        Command::Generate => pipeline.run(Stage::Generate).map(drop),
        Command::Classify => pipeline.run(Stage::Classify).map(drop),
        Command::Analyze => pipeline.run(Stage::Analyze).map(drop),
        Command::Validate => pipeline.run(Stage::Validate).map(drop),
        Command::Report => pipeline.run(Stage::Report).map(drop),
        Command::Run { stage: None } => pipeline.run_all().map(drop),
        Command::Run { stage: Some(name) } => {
            let stage = Stage::from_name(&name).ok_or_else(|| {
                CliError::Validation(format!(
                    "unknown stage {name:?}; expected one of {}",
                    Stage::ALL.map(Stage::name).join(", ")
                ))
            })?;
            pipeline.run(stage).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code())
        }
    }
}
