mod config;
mod experiments;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use experiments::Failure;
use parlab_core::acceptance;
use parlab_core::laws::builtin_laws;

/// Numerical laboratory for parabolic Dirichlet-to-Neumann inverse problems.
#[derive(Parser)]
#[command(name = "parlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Run the acceptance battery and print one line per criterion.
    Verify {
        /// Comma-separated criterion ids; all when omitted.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
        /// Directory for summary.json (created if missing).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// List the builtin coefficient laws.
    ListLaws,
}

fn init_threads() {
    if let Some(n) = std::env::var("PARLAB_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn run(config: PathBuf) -> ExitCode {
    let cfg = match config::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(1);
        }
    };
    match experiments::run(&cfg) {
        Ok(_) => {
            println!("{:?}: artifacts in {}", cfg.kind, cfg.output.display());
            ExitCode::SUCCESS
        }
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Experiment(m)) => {
            eprintln!("experiment failed: {m}");
            let _ = report::write_json(
                &cfg.output.join("error.json"),
                &serde_json::json!({"kind": format!("{:?}", cfg.kind), "error": m}),
            );
            ExitCode::from(2)
        }
    }
}

fn verify(only: Vec<u32>, output: Option<PathBuf>) -> ExitCode {
    let all = acceptance::run_all_filtered(&only);
    println!("{:>3}  {:<4}  criterion", "id", "");
    for o in &all {
        println!("{}", o.line());
    }
    let failed = all.iter().filter(|o| !o.passed).count();
    println!("{} of {} criteria passed", all.len() - failed, all.len());
    if let Some(dir) = output {
        if let Err(e) = std::fs::create_dir_all(&dir)
            .map_err(|e| e.into())
            .and_then(|_| report::write_json(&dir.join("summary.json"), &all))
        {
            eprintln!("could not write summary: {e}");
            return ExitCode::from(1);
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    init_threads();
    match Cli::parse().command {
        Command::Run { config } => run(config),
        Command::Verify { only, output } => verify(only, output),
        Command::ListLaws => {
            for (name, description, law) in builtin_laws() {
                println!("{name:<12} {description}");
                let body = toml::to_string(&law).unwrap_or_default();
                for line in body.lines() {
                    println!("    {line}");
                }
            }
            ExitCode::SUCCESS
        }
    }
}
