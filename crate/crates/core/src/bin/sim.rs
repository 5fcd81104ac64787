use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(rheston::cli::run())
}
