use std::process::ExitCode;

fn main() -> ExitCode {
    isamfr::cli::main_with_args(std::env::args_os())
}
