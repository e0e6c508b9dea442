//! Standalone sort checker for the supported SMT-LIB fragment.
//!
//! Reads the script named on the command line (or stdin), prints nothing
//! and exits 0 when every command is well-sorted; prints an SMT-LIB style
//! `(error ...)` diagnostic and exits 1 otherwise.

use std::io::Read;
use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let text = match args.first().map(String::as_str) {
        None | Some("-") => {
            let mut buf = String::new();
            if let Err(e) = std::io::stdin().read_to_string(&mut buf) {
                eprintln!("(error \"cannot read stdin: {e}\")");
                return ExitCode::from(2);
            }
            buf
        }
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("(error \"cannot read {path}: {e}\")");
                return ExitCode::from(2);
            }
        },
    };
    match refcheck::check_script(&text) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            println!("(error \"{}\")", e.message.replace('"', "'"));
            ExitCode::FAILURE
        }
    }
}
