use std::fs::File;
use std::io::{self, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mlas_cli::config::Study;
use mlas_cli::experiments::run_study;
use mlas_cli::{CliError, CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mlas", version, about = "Multilevel active subspace experiments")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalue-tail study of level gradients and level differences.
    ProjectionError(StudyArgs),
    /// Work/error study of single-level, multilevel and adaptive methods.
    Complexity(StudyArgs),
    /// Fit one surrogate (slaspa, mlaspa or amlaspa) and store it.
    Fit(StudyArgs),
    /// Evaluate a stored surrogate at points from a headerless CSV file.
    Eval {
        #[arg(long)]
        surrogate: PathBuf,
        #[arg(long)]
        points: PathBuf,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the configuration JSON Schema.
    Schema,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn study_name(s: &Study) -> &'static str {
    match s {
        Study::ProjectionError(_) => "projection-error",
        Study::Complexity(_) => "complexity",
        Study::Fit(_) => "fit",
    }
}

fn run_study_command(expected: &str, args: &StudyArgs) -> CliResult<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    if study_name(&cfg.study) != expected {
        return Err(CliError::config(
            "study",
            format!("config describes a `{}` study, not `{expected}`", study_name(&cfg.study)),
        ));
    }
    let seed = args.seed.unwrap_or(cfg.seed);
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("mlas-out"));
    let result = run_study(&cfg, seed, &out)?;
    for f in &result.files {
        eprintln!("wrote {}", f.display());
    }
    if result.partial {
        return Err(CliError::Partial(out.display().to_string()));
    }
    Ok(())
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::io(format!("opening {}", path.display()), e))
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::ProjectionError(a) => run_study_command("projection-error", &a),
        Command::Complexity(a) => run_study_command("complexity", &a),
        Command::Fit(a) => run_study_command("fit", &a),
        Command::Eval { surrogate, points, out } => {
            let text = std::fs::read_to_string(&surrogate)
                .map_err(|e| CliError::io(format!("reading {}", surrogate.display()), e))?;
            let pts = BufReader::new(open(&points)?);
            match out {
                Some(p) => {
                    let f = File::create(&p).map_err(|e| CliError::io(format!("creating {}", p.display()), e))?;
                    mlas_cli::eval::evaluate_surrogate(&text, pts, BufWriter::new(f))?;
                }
                None => {
                    mlas_cli::eval::evaluate_surrogate(&text, pts, io::stdout().lock())?;
                }
            }
            Ok(())
        }
        Command::Schema => {
            print!("{}", mlas_cli::SCHEMA);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
