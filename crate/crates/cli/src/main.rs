mod cli;
mod commands;
mod config;

use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use echochamber::Error;

use cli::{Cli, Command};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Usage(_) => EXIT_USAGE,
                Error::Numerical(_) | Error::Simulation(_) => EXIT_NUMERICAL,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

fn run(cli: Cli) -> Result<()> {
    let file = config::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Preprocess(a) => {
            let s = commands::preprocess::run(a, &file)?;
            println!(
                "{} persons, {} utterances, {} tokens ({:.1}% removed by the vocabulary limit)",
                s.persons,
                s.utterances,
                s.tokens,
                100.0 * s.tokens_removed
            );
        }
        Command::Fit(a) => {
            commands::fit::run(a, &file)?;
        }
        Command::Simulate(a) => {
            let t = commands::simulate::run(a, &file)?;
            println!(
                "{} persons, {} utterances, {} tokens over {} word types",
                t.num_persons(),
                t.utterances().len(),
                t.num_tokens(),
                t.vocab_size()
            );
        }
        Command::Evaluate(a) => {
            commands::evaluate::run(a)?;
        }
        Command::Export(a) => commands::export::run(a, &file)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
