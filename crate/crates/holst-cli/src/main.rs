use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use holst_cli::config::load_config;
use holst_cli::fields::{read_fields, write_fields};
use holst_cli::report::{render, Format};
use holst_cli::{exit, omega_tilde_file, reduce_file, suites, verdict, CliError};

/// Numerical checks for tetrad gravity with a Holst twist on a periodic boundary.
///
/// Exit codes: 0 all checks pass, 1 a check failed, 2 configuration or I/O
/// error, 3 numerical conditioning failure.
#[derive(Parser)]
#[command(name = "holst", version)]
struct Cli {
    /// JSON run configuration (see README for the schema).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured check suites.
    Verify,
    /// Compare the constraints of a field file with the Einstein-Hilbert constraints.
    Reduce {
        /// Field file with coframe and connection.
        #[arg(long)]
        fields: PathBuf,
    },
    /// Write the structural representative of the connection of a field file.
    OmegaTilde {
        #[arg(long)]
        fields: PathBuf,
    },
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = load_config(path)?;
    if cli.threads == 0 {
        return Err(CliError::Config("--threads must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Verify => {
            let (report, err) = suites::run_suites(&cfg, cli.threads);
            emit(&render(&report, cli.format)?, &cli.out)?;
            if let Some(e) = &err {
                eprintln!("holst: aborted: {e}");
            }
            Ok(verdict(&report, err.as_ref()))
        }
        Command::Reduce { fields } => {
            let report = reduce_file(&cfg, &read_fields(&fields)?, cli.threads)?;
            emit(&render(&report, cli.format)?, &cli.out)?;
            Ok(verdict(&report, None))
        }
        Command::OmegaTilde { fields } => {
            let (file, residual) = omega_tilde_file(&cfg, &read_fields(&fields)?)?;
            match &cli.out {
                Some(p) => write_fields(&file, p)?,
                None => println!("{}", serde_json::to_string(&file).map_err(|e| CliError::Io(e.to_string()))?),
            }
            eprintln!("structural residual {residual:e}");
            Ok(exit::PASS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("holst: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
