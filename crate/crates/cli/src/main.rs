use std::process::ExitCode;

use clap::Parser;

use noma_deepsic_cli::{run_scenario, Cli, RunOptions};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match cli.effective_config() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(64);
        }
    };
    let opts = RunOptions {
        output_dir: cfg.resolve_output_dir(cli.out.as_deref()),
        jobs: cli.jobs,
    };
    match run_scenario(cli.scenario, &cfg, &opts) {
        Ok(outcome) => {
            for failure in &outcome.certification_failures {
                eprintln!("certification: {failure}");
            }
            println!(
                "{}: {} artifacts in {} ({:.1} s)",
                outcome.manifest.scenario,
                outcome.manifest.artifacts.len(),
                opts.output_dir.display(),
                outcome.manifest.wall_clock_s
            );
            if cli.strict && !outcome.certification_failures.is_empty() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
