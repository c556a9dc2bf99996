use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = match ckpca_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match ckpca_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ckpca: {e}");
            e.exit_code()
        }
    }
}
