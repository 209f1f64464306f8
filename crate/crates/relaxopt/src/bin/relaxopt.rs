use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(relaxopt::cli::run(std::env::args_os()))
}
