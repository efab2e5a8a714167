//! `ceo-rd`: command-line frontend over the `ceo_rd` library.
//!
//! Exit codes: 0 success, 2 invalid input or out-of-domain parameters,
//! 3 internal inconsistency, 4 a Monte Carlo comparison outside its gate.

mod commands;
mod config;

use std::fs::File;
use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;

use commands::Report;
use config::{Cli, Command, Format, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Domain(String),
    Inconsistent(String),
    Io(io::Error),
}

impl From<ceo_rd::Error> for CliError {
    fn from(e: ceo_rd::Error) -> Self {
        match e {
            ceo_rd::Error::Inconsistent(msg) => CliError::Inconsistent(msg),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

fn write_report(report: &Report, cfg: &RunConfig) -> Result<(), CliError> {
    let sink: Box<dyn Write> = match &cfg.out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    match cfg.format() {
        Format::Json => {
            let mut sink = sink;
            serde_json::to_writer_pretty(&mut sink, &report.json).map_err(io::Error::from)?;
            writeln!(sink)?;
            sink.flush()?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            w.write_record(&report.table.header)?;
            for row in &report.table.rows {
                w.write_record(row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

type Builder = fn(&RunConfig) -> Result<Report, CliError>;

fn run(cli: Cli) -> Result<u8, CliError> {
    let (cfg, build): (RunConfig, Builder) = match &cli.command {
        Command::Point(a) => (a.config()?, commands::point),
        Command::Sweep(a) => (a.config()?, commands::sweep),
        Command::Region(a) => (a.config()?, commands::region),
        Command::Conditions(a) => (a.config()?, commands::conditions),
        Command::Verify(a) => (a.config()?, commands::verify),
        Command::BtCheck(a) => (a.config()?, commands::bt_check),
        Command::Simulate(a) => (a.config()?, commands::simulate),
        Command::DecompCheck(a) => (a.config()?, commands::decomp_check),
    };
    let report = build(&cfg)?;
    write_report(&report, &cfg)?;
    Ok(report.exit)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Inconsistent(msg)) => {
            eprintln!("inconsistency: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(CliError::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
