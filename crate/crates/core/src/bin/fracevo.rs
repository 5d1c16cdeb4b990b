use std::process::ExitCode;

fn main() -> ExitCode {
    fracevo::cli::main()
}
