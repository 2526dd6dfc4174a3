use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hamflow_cli::{run, Job, RunConfig, RunOptions, EXIT_CONFIG};

/// Run a hamflow experiment described by a JSON config.
#[derive(Parser, Debug)]
#[command(name = "hamflow", version)]
struct Args {
    /// Job to run; overrides the config's `job` field.
    #[arg(value_enum)]
    job: Job,
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Run a single seed.
    #[arg(long)]
    seed_id: Option<usize>,
    /// Output prefix; overrides the config's `output` field.
    #[arg(long)]
    output: Option<String>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG as u8);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let opts = RunOptions {
        job: Some(args.job),
        threads: args.jobs,
        seed_id: args.seed_id,
        output: args.output,
    };
    match run(&cfg, &opts) {
        Ok(outcome) => {
            for r in &outcome.report.reports {
                println!("{}", r.summary());
            }
            for s in outcome.report.seeds.iter().filter(|s| s.status != "ok") {
                println!(
                    "seed {} left the solvable interval after t = {}: {}",
                    s.seed_id,
                    s.last_good_time,
                    s.error.as_deref().unwrap_or("")
                );
            }
            println!("wrote {}", outcome.trajectories.display());
            println!("wrote {}", outcome.residuals.display());
            println!("wrote {}", outcome.report_path.display());
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
