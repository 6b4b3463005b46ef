use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(heartscape_cli::run(std::env::args_os()))
}
