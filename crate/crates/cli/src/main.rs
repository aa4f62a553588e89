use std::process::ExitCode;

use clap::Parser;
use qvel_cli::{run, Cli, CliError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Diverged { last_valid_time } => println!(
                    "{}",
                    serde_json::json!({
                        "error": "integration_diverged",
                        "last_valid_time": last_valid_time,
                    })
                ),
                CliError::CriteriaFailed(_) => eprintln!("qvel: {e}"),
                _ => eprintln!("qvel: {e}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
