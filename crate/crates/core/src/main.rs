use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(text2ml::cli::main_with_args(std::env::args_os()))
}
