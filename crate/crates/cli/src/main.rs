use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use repgame_cli::{menus_json, report, run, Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(args) => run(args).map(|o| {
            if o.failures > 0 {
                eprintln!("{} trials failed; see failures.csv", o.failures);
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }),
        Command::Report(args) => report(args).map(|o| {
            print!("{}", o.table);
            if o.skipped > 0 {
                eprintln!("skipped {} unreadable records", o.skipped);
            }
            ExitCode::SUCCESS
        }),
        Command::Menus => menus_json().map(|s| {
            // a closed pipe (e.g. `| head`) is not an error
            let _ = writeln!(std::io::stdout().lock(), "{s}");
            ExitCode::SUCCESS
        }),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
