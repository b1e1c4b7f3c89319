use std::process::ExitCode;

fn main() -> ExitCode {
    cbfe_aif::cli::main_with_args(std::env::args_os())
}
