use std::process::ExitCode;

fn main() -> ExitCode {
    cmseq_cli::run(std::env::args_os())
}
