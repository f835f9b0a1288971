use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polaron_cli::{load_config, run_scenario};

#[derive(Parser)]
#[command(name = "polaron", version, about = "Pekar, multipolaron and crystal polaron solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario of a config and write its record into the output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `output` field, then `./out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 uses every core.
        #[arg(long, env = "POLARON_THREADS", default_value_t = 0)]
        threads: usize,
    },
    /// Parse and validate a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                println!("ok: {} (hash {})", cfg.scenario.name(), cfg.hash());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprint!("{e}");
                eprintln!();
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Command::Run { config, out, threads } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(e.exit_code() as u8);
                }
            };
            if threads > 0 {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
                    eprintln!("cannot configure {threads} threads: {e}");
                    return ExitCode::from(1);
                }
            }
            let dir = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
            match run_scenario(&cfg, &dir) {
                Ok(rec) => {
                    match &rec.error {
                        Some(e) => eprintln!("{}: {}", e.kind, e.message),
                        None => println!("{} {:?} in {:.2} s, record at {}", cfg.scenario.name(), rec.status, rec.wall_time, dir.join("record.json").display()),
                    }
                    for w in &rec.warnings {
                        eprintln!("warning: {w}");
                    }
                    ExitCode::from(rec.exit_code as u8)
                }
                Err(e) => {
                    eprintln!("cannot write output to {}: {e}", dir.display());
                    ExitCode::from(1)
                }
            }
        }
    }
}
