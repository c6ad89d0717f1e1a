use std::process::ExitCode;

use clap::Parser;
use serde_json::json;
use vegpatch_cli::{dispatch, parse_config, Cli, RunError};

fn fail(err: &RunError) -> ExitCode {
    eprintln!("error: {err}");
    let summary = json!({ "status": "error", "kind": err.kind(), "message": err.to_string() });
    eprintln!("{summary}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let config = match parse_config(&cli) {
        Ok(c) => c,
        Err(e) => return fail(&RunError::Config(e)),
    };
    if let Some(n) = config.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    let argv: Vec<String> = std::env::args().collect();
    match dispatch(&config, &argv) {
        Ok(outcome) if outcome.check_failures.is_empty() => ExitCode::SUCCESS,
        Ok(outcome) => fail(&RunError::Check(outcome.check_failures.join("; "))),
        Err(e) => fail(&e),
    }
}
