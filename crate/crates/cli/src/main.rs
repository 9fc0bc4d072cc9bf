use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use photodyn::closed_loop::closed_loop;
use photodyn::config::RunConfig;
use photodyn::exit::{CliError, CliResult};
use photodyn::{analyze, report, simulate};
use photodyn_core::closed_loop::DEFAULT_SEED;

#[derive(Parser)]
#[command(name = "photodyn", version, about = "Quantum-emitter photodynamics: simulate, analyze, verify")]
struct Cli {
    /// Worker threads for sweep points; overrides PHOTODYN_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the protocol of a config and write a run directory.
    Simulate {
        #[arg(short, long)]
        config: PathBuf,
        /// Output directory; defaults to `output_dir` of the config.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Overrides the seed of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run analysis stages on a run directory.
    Analyze {
        dir: PathBuf,
        /// Comma-separated stage names; defaults to the configured stages.
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<String>>,
    },
    /// Closed-loop parameter recovery suite, or `all`.
    ClosedLoop {
        suite: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Flatten fit results and checks under a directory into CSV tables.
    Report { dir: PathBuf },
}

fn init_threads(flag: Option<usize>) -> CliResult<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("PHOTODYN_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("PHOTODYN_THREADS must be a positive integer, got `{v}`")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Usage("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Simulate { config, output, seed } => {
            let (cfg, text) = RunConfig::load(&config)?;
            let dir = output
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| CliError::Usage("no output directory: pass -o or set output_dir".into()))?;
            let seed = seed.unwrap_or(cfg.seed);
            let manifest = simulate::simulate(&cfg, &text, seed, &dir)?;
            for f in &manifest.outputs {
                println!("{}", dir.join(&f.file).display());
            }
            Ok(())
        }
        Command::Analyze { dir, stages } => {
            let outcomes = analyze::analyze(&dir, stages.as_deref())?;
            let mut worst: Option<CliError> = None;
            for o in &outcomes {
                match &o.error {
                    None => println!("ok     {:<11} {}", o.stage, o.outputs.join(" ")),
                    Some(e) => {
                        println!("failed {:<11} {e}", o.stage);
                        let err = if o.code == Some(2) {
                            CliError::Usage(format!("stage {} is missing inputs", o.stage))
                        } else {
                            CliError::Analysis(format!("stage {} failed", o.stage))
                        };
                        // missing inputs outrank analysis failures
                        if worst.as_ref().is_none_or(|w| w.code() != 2) {
                            worst = Some(err);
                        }
                    }
                }
            }
            worst.map_or(Ok(()), Err)
        }
        Command::ClosedLoop { suite, output, seed } => {
            let reports = closed_loop(&suite, seed, output.as_deref())?;
            let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.suite.as_str()).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Analysis(format!("failed suites: {}", failed.join(", "))))
            }
        }
        Command::Report { dir } => {
            for f in report::report(&dir)? {
                println!("{}", dir.join(f).display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("photodyn: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
