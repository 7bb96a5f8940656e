use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let code = proofee_cli::run_cli(
        std::env::args_os(),
        proofee_cli::default_rule(),
        &mut io::stdout().lock(),
        &mut io::stderr().lock(),
    );
    ExitCode::from(code as u8)
}
