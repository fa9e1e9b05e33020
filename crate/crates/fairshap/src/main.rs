use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(fairshap::cli::run(std::env::args_os()))
}
