use std::process::ExitCode;

fn main() -> ExitCode {
    topohrl_cli::main_with_args(std::env::args_os())
}
