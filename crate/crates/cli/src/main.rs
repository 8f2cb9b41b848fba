use std::process::ExitCode;

use clap::Parser;
use qte_cli::options::expand_config;
use qte_cli::{run, Cli, CliError};

fn fail(e: &CliError) -> ExitCode {
    let payload = serde_json::json!({
        "record": "error",
        "kind": e.kind(),
        "exit_code": e.exit_code(),
        "message": e.to_string(),
    });
    eprintln!("{payload}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    // clap exits with 2 on usage errors, matching the validation code
    let cli = Cli::parse_from(args);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
