//! The `fudnn` command line: synthetic data, preprocessing, connectivity,
//! training, evaluation and the experiment protocols, each writing its
//! outputs and a `manifest.json` into one `--out` directory.

pub mod commands;
pub mod config;
mod error;
pub mod output;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use commands::{run, Cli, Command};
pub use error::{CliError, CliResult};

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // A second initialization (several runs in one process) keeps the first logger.
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    let outcome = match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => Err(CliError::Usage(format!("cannot start {n} threads: {e}"))),
        },
        None => run(cli),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
