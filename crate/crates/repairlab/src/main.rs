use std::process::ExitCode;

fn main() -> ExitCode {
    repairlab::cli::run()
}
