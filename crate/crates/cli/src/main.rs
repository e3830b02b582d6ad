use std::process::ExitCode;

use clap::Parser;

use livelihood_cli::{exit_code, resolve_config, run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = resolve_config(&cli).and_then(|cfg| run(cli.command, &cfg));
    match result {
        Ok(m) => {
            println!(
                "{} finished: {} outputs, config {}",
                m.command,
                m.outputs.len(),
                &m.config_hash[..12]
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
