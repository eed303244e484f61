mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use commands::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap usage errors name the offending flag; mirror them as
            // structured JSON on stderr and keep the usage text.
            let payload = serde_json::json!({
                "error": { "kind": "usage", "message": err.to_string() }
            });
            eprintln!("{payload}");
            return ExitCode::from(2);
        }
    };
    match commands::execute(cli) {
        Ok(all_passed) => {
            if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(err) => {
            let payload = serde_json::json!({
                "error": { "kind": err.kind(), "message": err.to_string() }
            });
            eprintln!("{payload}");
            ExitCode::from(2)
        }
    }
}
