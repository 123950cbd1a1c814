//! The `didlab` command.
//!
//! Six subcommands bind the pipeline: `prepare`, `estimate`, `spatial`,
//! `simulate`, `monte-carlo` and `report`. Settings come from an optional
//! TOML run configuration (`--config`) and are overridden by flags. Every
//! command computes all of its results before writing, writes each file
//! through a temporary sibling and a rename, and holds `.didlab.lock` in its
//! output directory while it runs.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0  | success |
//! | 1  | any other failure (I/O, invalid settings, estimation errors) |
//! | 2  | input file violates its schema |
//! | 3  | requested product has no purchase records |
//! | 4  | unknown product or outcome |
//! | 5  | nothing to report |
//! | 6  | output directory locked by another run |
//! | 64 | command-line usage error |
//!
//! `DIDLAB_THREADS` caps the worker threads. Diagnostics go to stderr;
//! stdout stays empty.

mod args;
mod commands;
mod config;
mod report;

use std::ffi::OsString;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use clap::Parser;

pub use args::{Cli, Command};
pub use config::{EstimateConfig, InputConfig, RunConfig, SimulateConfig, SpatialConfig};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_EMPTY_PRODUCT: i32 = 3;
pub const EXIT_UNKNOWN: i32 = 4;
pub const EXIT_NOTHING_TO_REPORT: i32 = 5;
pub const EXIT_LOCKED: i32 = 6;
pub const EXIT_USAGE: i32 = 64;

pub const LOCK_FILE: &str = ".didlab.lock";

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn new(code: i32, message: impl Into<String>) -> Failure {
        Failure { code, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let code = match e {
            Error::Schema { .. } => EXIT_SCHEMA,
            _ => EXIT_FAILURE,
        };
        Failure::new(code, e.to_string())
    }
}

/// Exclusive hold on an output directory; released on drop.
struct DirLock {
    path: PathBuf,
    _file: File,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<DirLock, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::from(Error::io(dir, e)))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(file) => Ok(DirLock { path, _file: file }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Failure::new(
                EXIT_LOCKED,
                format!("{} exists: another didlab run is using this directory (remove the file if no run is active)", path.display()),
            )),
            Err(e) => Err(Error::io(&path, e).into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn init_logging(cli: &Cli, cfg: &RunConfig) {
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else if cli.verbose > 0 {
        match cli.verbose {
            1 => log::LevelFilter::Info,
            2 => log::LevelFilter::Debug,
            _ => log::LevelFilter::Trace,
        }
    } else {
        cfg.verbosity.as_deref().and_then(|v| v.parse().ok()).unwrap_or(log::LevelFilter::Warn)
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).target(env_logger::Target::Stderr).try_init();
    log::set_max_level(level);
}

fn init_threads() {
    let Ok(v) = std::env::var("DIDLAB_THREADS") else { return };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
                log::debug!("thread pool already initialised");
            }
        }
        _ => log::warn!("ignoring DIDLAB_THREADS={v:?} (expected a positive integer)"),
    }
}

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match &cli.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_FAILURE;
            }
        },
        None => RunConfig::default(),
    };
    init_logging(&cli, &cfg);
    init_threads();
    match commands::dispatch(&cli.command, &cfg) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
