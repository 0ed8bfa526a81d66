use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use trajscene::pipeline::{PipelineConfig, PipelineError, Runner, Stage, StageStatus, EVAL_TEXT_FILE};
use trajscene::synth;

#[derive(Parser)]
#[command(name = "trajscene", version, about = "Trajectory scene pipeline for travel-mode identification")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seeds the synthetic corpus, hashing embedders, split and init.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory (for `synth`, the corpus directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, clean and segment a GeoLife-layout corpus.
    Ingest,
    /// Kinematic reports per segment.
    Features,
    /// Map scenes (SVG, sidecar, optional PNG).
    Render,
    /// Temporal/dynamics narratives.
    Narrate,
    /// Image and text embeddings.
    Embed,
    /// All four combination rules per segment.
    Combine,
    /// Train the classifier on the configured rule.
    Train,
    /// Evaluate the checkpoint on the held-out split.
    Eval,
    /// Train and evaluate every combination rule on one split.
    Ablate,
    /// Every stage in order, skipping up-to-date ones.
    Pipeline,
    /// Write a synthetic labeled corpus plus its OSM extract.
    Synth {
        /// Segments per travel mode.
        #[arg(long)]
        per_mode: Option<usize>,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => {
            let mut cfg = PipelineConfig::default();
            cfg.resolve_paths(&std::env::current_dir().unwrap_or_default());
            cfg
        }
    };
    if let Some(seed) = cli.seed {
        cfg.apply_seed(seed);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = load_config(&cli)?;
    let stage = match &cli.command {
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            return Ok(());
        }
        Command::Synth { per_mode } => {
            if let Some(n) = per_mode {
                cfg.synth.segments_per_mode = *n;
            }
            let dir = cli.out.clone().unwrap_or_else(|| cfg.paths.geolife_root.clone());
            let corpus = synth::generate(&cfg.synth).map_err(|m| PipelineError::new("synth", None, m))?;
            corpus.write_geolife(&dir).map_err(|e| PipelineError::new("synth", None, e.to_string()))?;
            println!("synth: {} segments written to {}", corpus.segments().count(), dir.display());
            return Ok(());
        }
        Command::Ingest => Some(Stage::Ingest),
        Command::Features => Some(Stage::Features),
        Command::Render => Some(Stage::Render),
        Command::Narrate => Some(Stage::Narrate),
        Command::Embed => Some(Stage::Embed),
        Command::Combine => Some(Stage::Combine),
        Command::Train => Some(Stage::Train),
        Command::Eval => Some(Stage::Eval),
        Command::Ablate => Some(Stage::Ablate),
        Command::Pipeline => None,
    };
    if let Some(out) = cli.out {
        cfg.paths.out_dir = out;
    }
    cfg.validate()?;
    cfg.preflight()?;
    let mut runner = Runner::new(cfg)?;
    match stage {
        Some(stage) => {
            runner.run(stage)?;
        }
        None => runner.run_all()?,
    }
    for (stage, status) in &runner.history {
        let word = match status {
            StageStatus::Ran => "ran",
            StageStatus::Skipped => "skipped (up to date)",
        };
        println!("{}: {word}", stage.name());
    }
    for (stage, w) in runner.manifest().warnings() {
        println!("warning [{stage}]: {w}");
    }
    if matches!(stage, None | Some(Stage::Eval)) {
        if let Ok(text) = std::fs::read_to_string(runner.out_dir().join(EVAL_TEXT_FILE)) {
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
