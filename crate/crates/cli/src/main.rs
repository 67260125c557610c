use std::process::ExitCode;

use clap::Parser;
use uwoc_cli::config::SEED_ENV;
use uwoc_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            let msg = e.kind().to_string();
            eprintln!("{}", serde_json::json!({ "error": "usage", "exit_code": 2, "message": msg }));
            return ExitCode::from(2);
        }
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    match run(cli, env_seed.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("uwoc: {e}");
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
