mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::commands::{Outcome, RunDir};
use crate::config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "pucci",
    version,
    about = "Flows, eigenprofiles and concavity checks for Pucci-type operators",
    after_help = "Config keys and their defaults: `pucci --help defaults`.\n\
                  Exit codes: 0 pass, 1 check failure, 2 usage or config error, 3 numerical failure.\n\
                  Run directories default to $PUCCI_OUT/<command>-<config> (PUCCI_OUT defaults to ./runs)."
)]
struct Cli {
    /// Cap on worker threads for parallel sweeps
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Run directory, overriding output.dir and PUCCI_OUT
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Allow writing into an existing non-empty directory
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the flow on every grid level and write snapshots
    Evolve { config: PathBuf },
    /// Compute the principal eigenprofile (m = 1) or the porous limit profile (m > 1)
    Eigen { config: PathBuf },
    /// Run a single diagnostic and report pass or fail
    Check {
        #[command(subcommand)]
        what: CheckCmd,
    },
    /// Run a registered verification experiment (`all` runs every one)
    Experiment {
        #[arg(required_unless_present = "list")]
        name: Option<String>,
        /// Print the registry and exit
        #[arg(long)]
        list: bool,
    },
    /// Aggregate every manifest under a directory into summary.json and summary.csv
    Report { dir: PathBuf },
}

#[derive(Subcommand, Debug, Clone)]
enum CheckCmd {
    /// Midpoint concavity of log u or a power of u on the interior band
    Concavity { config: PathBuf },
    /// Empirical Aronson-Benilan constant of a porous flow over a time window
    Ab { config: PathBuf },
    /// Ordering of random ordered pairs under a shared step sequence
    Comparison { config: PathBuf },
    /// Discrete residual of an explicit subsolution on every grid level
    Barriers { config: PathBuf },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error(transparent)]
    Core(#[from] pucci_core::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Core(pucci_core::Error::Integration { .. })
            | CliError::Core(pucci_core::Error::NoConvergence { .. }) => 3,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    RunConfig::load(path).map_err(|source| CliError::Config {
        path: path.display().to_string(),
        source,
    })
}

fn default_root() -> PathBuf {
    std::env::var_os("PUCCI_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn run(cli: Cli) -> Result<u8, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    let argv: Vec<String> = std::env::args().collect();

    let (label, config_path, cfg) = match &cli.command {
        Command::Evolve { config } => ("evolve", Some(config), Some(load(config)?)),
        Command::Eigen { config } => ("eigen", Some(config), Some(load(config)?)),
        Command::Check { what } => {
            let (label, config) = match what {
                CheckCmd::Concavity { config } => ("check-concavity", config),
                CheckCmd::Ab { config } => ("check-ab", config),
                CheckCmd::Comparison { config } => ("check-comparison", config),
                CheckCmd::Barriers { config } => ("check-barriers", config),
            };
            (label, Some(config), Some(load(config)?))
        }
        Command::Experiment { list: true, .. } => {
            for e in pucci_core::verify::registry() {
                println!("{:<22} {}", e.name, e.summary);
            }
            return Ok(0);
        }
        Command::Experiment { name, .. } => {
            let name = name.as_deref().unwrap_or_default();
            if name != "all" {
                pucci_core::verify::find(name)?;
            }
            ("experiment", None, None)
        }
        Command::Report { dir } => return commands::report(dir, cli.force),
    };

    let dir = match (&cli.out, cfg.as_ref().and_then(|c| c.output_dir.clone())) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => p,
        (None, None) => {
            let suffix = match (&cli.command, config_path) {
                (Command::Experiment { name, .. }, _) => name.clone().unwrap_or_default(),
                (_, Some(p)) => stem(p),
                _ => "run".into(),
            };
            default_root().join(format!("{label}-{suffix}"))
        }
    };
    let out = RunDir::prepare(dir, cli.force)?;

    let start = Instant::now();
    let result = match (&cli.command, &cfg) {
        (Command::Evolve { .. }, Some(c)) => commands::evolve(c, &out),
        (Command::Eigen { .. }, Some(c)) => commands::eigen(c, &out),
        (Command::Check { what }, Some(c)) => match what {
            CheckCmd::Concavity { .. } => commands::concavity(c, &out),
            CheckCmd::Ab { .. } => commands::ab(c, &out),
            CheckCmd::Comparison { .. } => commands::comparison(c, &out),
            CheckCmd::Barriers { .. } => commands::barriers(c, &out),
        },
        (Command::Experiment { name, .. }, _) => {
            commands::experiment(name.as_deref().unwrap_or_default(), &out)
        }
        _ => unreachable!("handled above"),
    };
    let wall = start.elapsed().as_secs_f64();

    let (status, code, summary, error) = match &result {
        Ok(Outcome { passed, summary }) => {
            let (s, c) = if *passed { ("pass", 0) } else { ("fail", 1) };
            (s, c, summary.clone(), None)
        }
        Err(e) => (
            "error",
            e.code(),
            serde_json::Value::Null,
            Some(e.to_string()),
        ),
    };
    if let Some(c) = &cfg {
        out.write("config.resolved", &c.to_text())?;
    }
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": label,
        "argv": argv,
        "config_file": config_path.map(|p| p.display().to_string()),
        "config": cfg.as_ref().map(|c| c.to_json()),
        "threads": rayon::current_num_threads(),
        "wall_time_s": wall,
        "status": status,
        "exit_code": code,
        "error": error,
        "summary": summary,
    });
    out.write(
        "manifest.json",
        &serde_json::to_string_pretty(&manifest).unwrap(),
    )?;
    println!(
        "{label}: {status} ({wall:.2} s) -> {}",
        out.path().display()
    );
    result.map(|_| code)
}

fn wants_defaults(args: &[String]) -> bool {
    args.windows(2)
        .any(|w| (w[0] == "--help" || w[0] == "-h") && w[1] == "defaults")
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if wants_defaults(&args) {
        print!("{}", config::defaults_table());
        return ExitCode::SUCCESS;
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerical_failures_exit_three() {
        let e = CliError::Core(pucci_core::Error::Integration {
            node: 3,
            time: 0.5,
            message: "NaN".into(),
        });
        assert_eq!(e.code(), 3);
        let e = CliError::Core(pucci_core::Error::NoConvergence {
            steps: 10,
            message: "stalled".into(),
            history: vec![],
        });
        assert_eq!(e.code(), 3);
        assert_eq!(
            CliError::Core(pucci_core::Error::Config("x".into())).code(),
            2
        );
        assert!(wants_defaults(&[
            "pucci".into(),
            "--help".into(),
            "defaults".into()
        ]));
    }
}
