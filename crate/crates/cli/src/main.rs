use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hdbi::pipeline::{self, Overrides, PipelineConfig, PipelineError, Stage};
use hdbi::projections::Scenario;

#[derive(Parser)]
#[command(
    name = "hdbi",
    version,
    about = "Healthy Diet Basket index tables from FAO Food Balance Sheets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the config and inputs without writing anything.
    Validate(Common),
    /// Splice the two balance-sheet series into one panel.
    Ingest(Common),
    /// Country-year ratios and index.
    Score(Common),
    /// Regional and world aggregates and decade summaries.
    Aggregate(Common),
    /// Scenario projections (forces the projection stage on).
    Project(Common),
    /// Every enabled stage.
    Run(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, replacing `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// First year taken from the new-methodology series.
    #[arg(long)]
    splice_year: Option<i32>,
    /// Commodity map, replacing `inputs.commodity_map` (`builtin` for the shipped map).
    #[arg(long)]
    map: Option<PathBuf>,
    /// Project only this scenario.
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    /// Output format.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse()
        .map_err(|e: hdbi::projections::ProjectionError| e.to_string())
}

fn load(common: &Common) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::load(&common.config)?;
    cfg.apply(&Overrides {
        out: common.out.clone(),
        splice_year: common.splice_year,
        map: common.map.clone(),
        scenario: common.scenario,
    });
    let Format::Csv = common.format;
    Ok(cfg)
}

fn execute(command: &Command) -> Result<(), PipelineError> {
    let (common, stage) = match command {
        Command::Validate(c) => {
            let report = pipeline::validate(&load(c)?);
            if report.is_ok() {
                println!("ok");
                return Ok(());
            }
            return Err(PipelineError::Validation(report));
        }
        Command::Ingest(c) => (c, Stage::Ingest),
        Command::Score(c) => (c, Stage::Score),
        Command::Aggregate(c) => (c, Stage::Aggregate),
        Command::Project(c) => (c, Stage::Project),
        Command::Run(c) => (c, Stage::Project),
    };
    let mut cfg = load(common)?;
    if matches!(command, Command::Project(_)) {
        cfg.stages.projections = true;
    }
    let out = pipeline::run_stage(&cfg, stage)?;
    let dir = cfg.output_dir().unwrap_or_default();
    for name in out.files.keys() {
        println!("{}", dir.join(name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
