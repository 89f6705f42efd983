use std::process::ExitCode;

fn main() -> ExitCode {
    tokenomics_cli::main_with(std::env::args_os())
}
