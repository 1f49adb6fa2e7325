use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(arcsearch_cli::run(std::env::args_os()))
}
