use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use equidim::report::{emit_report, markdown_summary, run_experiment, ExperimentConfig, ReportFormat, ReportRecord};
use equidim::{catalog, Error, MapModel};

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "equidim", version, about = "Equilibrium measures, Lyapunov exponents and dimension bounds for maps of P1 and P2")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML or JSON config.
    Run { config: PathBuf },
    /// Re-emit one or more report records.
    Report {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        #[arg(long, default_value = "markdown_summary")]
        format: String,
        /// Output directory (defaults to the first record's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bundled maps.
    Maps {
        #[command(subcommand)]
        command: MapsCommand,
    },
}

#[derive(Subcommand)]
enum MapsCommand {
    /// List the bundled maps.
    List,
    /// Load a map file and count preimages to confirm its degrees.
    Check { file: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::StageFailure { .. } | Error::Io(_) | Error::Json(_) => EXIT_STAGE,
        _ => EXIT_CONFIG,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let record = run_experiment(&cfg)?;
            let out = cfg.resolved_output_dir();
            match &record.verdict {
                Some(v) => println!(
                    "{}: bounds [{:.4}, {:.4}], dim_hat {:.4}, {}",
                    record.map.id,
                    v.lower,
                    v.upper,
                    v.dim_hat,
                    if v.pass() { "pass" } else { "FAIL" }
                ),
                None => println!("{}: stages {:?} done", record.map.id, record.stages_run),
            }
            println!("artifacts in {}", out.display());
        }
        Command::Report { records, format, out } => {
            let format: ReportFormat = format.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
            let loaded = records
                .iter()
                .map(|p| ReportRecord::from_file(p).map_err(|e| Error::Config(format!("{}: {e}", p.display()))))
                .collect::<Result<Vec<_>, _>>()?;
            let dir = out.unwrap_or_else(|| records[0].parent().map(PathBuf::from).unwrap_or_default());
            if format == ReportFormat::MarkdownSummary && loaded.len() > 1 {
                std::fs::create_dir_all(&dir)?;
                let path = dir.join(equidim::report::SUMMARY_MD);
                std::fs::write(&path, markdown_summary(&loaded))?;
                println!("{}", path.display());
            } else {
                for r in &loaded {
                    for p in emit_report(r, format, &dir)? {
                        println!("{}", p.display());
                    }
                }
            }
        }
        Command::Maps { command } => match command {
            MapsCommand::List => {
                for id in catalog::ids() {
                    let def = catalog::definition(id)?;
                    println!("{id}\tk={}\tdegree={}\t{}", def.dimension, def.degree, def.description);
                }
            }
            MapsCommand::Check { file } => {
                let map = MapModel::from_file(&file)?;
                let report = map.check_degrees()?;
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
