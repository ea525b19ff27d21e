//! `drdyn`: Douglas-Rachford sphere/line dynamics from the command line.
//!
//! Exit codes: 0 success, 2 completed without reaching the target
//! (budget exhausted or a failed check), 64 usage error, 65 domain error,
//! 1 anything else.

mod args;
mod commands;
mod config;

use clap::error::ErrorKind;
use clap::Parser;

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = err.print();
            return code;
        }
    };
    match commands::execute(cli) {
        Ok(commands::Outcome::Done) => 0,
        Ok(commands::Outcome::NotConverged) => 2,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

fn exit_code_for(err: &drdyn_core::Error) -> i32 {
    use drdyn_core::Error as E;
    match err {
        E::InvalidParameter { .. } => 64,
        E::Io(_) | E::Serialize(_) => 1,
        _ => 65,
    }
}
