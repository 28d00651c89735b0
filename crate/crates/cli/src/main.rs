mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use args::Cli;
use commands::Usage;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                eprintln!("\n{}", help_for(std::env::args().skip(1)));
            }
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match commands::run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<Usage>().is_some()
                || matches!(e.downcast_ref::<paritylab::Error>(), Some(paritylab::Error::Parameter(_) | paritylab::Error::AmbientTooLarge(_)));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}

/// Help text of the innermost subcommand named on the command line.
fn help_for(args: impl Iterator<Item = String>) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    for arg in args {
        match cmd.find_subcommand(&arg) {
            Some(sub) => cmd = sub.clone(),
            None if arg.starts_with('-') => continue,
            None => break,
        }
    }
    cmd.render_help().to_string()
}
