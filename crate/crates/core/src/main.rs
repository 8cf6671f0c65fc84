use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commeco::pipeline::{Pipeline, PipelineConfig, PipelineError, ReportFormat, Stage, StageStatus};

#[derive(Parser)]
#[command(name = "commeco", version, about = "Competition and mutualism among online communities")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(short, long, global = true, default_value = "commeco.toml")]
    config: PathBuf,
    /// Run even if upstream outputs are stale or this stage is up to date.
    #[arg(long, global = true)]
    force: bool,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the corpus, filter eligible communities, build the weekly activity panel.
    Ingest,
    /// Author and topic vector spaces (LSA) and the phrase vocabulary.
    Vectorize,
    /// HDBSCAN grid search over author vectors, then the cluster size cap.
    Cluster,
    /// Cross-validated S-Map Jacobians per cluster.
    Smap,
    /// Sign episodes and their distributions.
    Episodes,
    /// Overlap series, the dyad panel and the hypothesis regressions.
    Panel,
    /// Simulate the configured scenario (truth, and a corpus if requested).
    Simulate,
    /// Aggregate stage outputs into report.json and report.csv.
    Report {
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = PipelineConfig::load(&cli.config)?;
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let threads = if cfg.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        cfg.threads
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| PipelineError::Other(e.to_string()))?;
    let mut pipeline = Pipeline::new(cfg)?;
    pipeline.force = cli.force;
    let effective = pipeline.config.to_toml();
    log::info!("effective config:\n{effective}");
    let dump = pipeline.workdir().join("effective_config.toml");
    std::fs::write(&dump, effective).map_err(|e| PipelineError::Other(format!("{}: {e}", dump.display())))?;

    let stage = match cli.command {
        Command::Ingest => Stage::Ingest,
        Command::Vectorize => Stage::Vectorize,
        Command::Cluster => Stage::Cluster,
        Command::Smap => Stage::Smap,
        Command::Episodes => Stage::Episodes,
        Command::Panel => Stage::Panel,
        Command::Simulate => Stage::Simulate,
        Command::Report { .. } => Stage::Report,
    };
    match pipeline.run(stage)? {
        StageStatus::Ran => eprintln!("{stage}: done"),
        StageStatus::UpToDate => eprintln!("{stage}: up to date"),
    }
    if let Command::Report { format } = cli.command {
        let format = match format {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        };
        let path = pipeline.workdir().join(format.file_name());
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::Other(format!("{}: {e}", path.display())))?;
        print!("{text}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
