use std::process::ExitCode;

use clap::Parser;

use lobadv_cli::config::Cli;
use lobadv_cli::error::CliError;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let text = e.to_string();
            let first = text
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ")
                .to_string();
            return fail(&CliError::config(first));
        }
    };
    match lobadv_cli::run(cli) {
        Ok(m) => {
            println!("{}", serde_json::to_string(&m.outputs).expect("digests serialize"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", serde_json::to_string(&e.record()).expect("record serializes"));
    ExitCode::from(e.exit_code() as u8)
}
