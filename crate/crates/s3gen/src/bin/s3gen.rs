use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(s3gen::cli::run(std::env::args_os()))
}
