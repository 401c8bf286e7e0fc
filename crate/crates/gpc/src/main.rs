use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = gpc::cli::Cli::parse();
    match gpc::cli::execute(cli) {
        Ok(code) => ExitCode::from(code.clamp(0, 255) as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
