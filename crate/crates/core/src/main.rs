use std::process::ExitCode;

fn main() -> ExitCode {
    tangible_bridge::cli::main_with_args(std::env::args_os())
}
