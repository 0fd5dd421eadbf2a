use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let code = surgecast::run(std::env::args_os(), &mut io::stdout(), &mut io::stderr());
    ExitCode::from(code)
}
