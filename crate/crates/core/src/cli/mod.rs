//! Command-line front end: `nlfront <command> --config run.toml --out-dir out/`.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use log::{error, info};

pub use commands::{run, Command, Session};
pub use config::{parse_config, RunConfig};
pub use manifest::RunManifest;

use crate::error::Error;

#[derive(Debug, Parser)]
#[command(name = "nlfront", version, about = "Spreading speeds and pulsating fronts with nonlocal dispersal")]
pub struct Args {
    pub command: Command,
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for manifest.json and the command's CSV/JSON artifacts.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, default_value = "info")]
    pub log_level: log::LevelFilter,
}

/// Runs one command and writes its manifest. Returns the exit code.
pub fn execute(args: &Args) -> i32 {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    let mut manifest = RunManifest::new(args.command.name());
    manifest.started = started;

    if let Err(err) = std::fs::create_dir_all(&args.out_dir) {
        error!("cannot create {}: {err}", args.out_dir.display());
        return 1;
    }

    let outcome = std::fs::read_to_string(&args.config)
        .map_err(Error::from)
        .and_then(|text| parse_config(&text));
    let result = match outcome {
        Err(err) => Err(err),
        Ok(config) => {
            manifest.config = Some(config.clone());
            let mut session = Session::new(&config, &args.out_dir);
            let result = run(args.command, &mut session);
            manifest.results = session.results;
            manifest.checks = session.checks;
            manifest.warnings = session.warnings;
            manifest.artifacts = session.artifacts;
            result
        }
    };
    if let Err(err) = &result {
        error!("{err}");
        manifest.error = Some(err.to_string());
        manifest.exit_code = err.exit_code();
    }
    manifest.wall_clock_s = clock.elapsed().as_secs_f64();
    if let Err(err) = manifest.write(&args.out_dir) {
        error!("cannot write manifest: {err}");
        return 1;
    }
    info!(
        "{} finished in {:.2} s with exit code {}",
        manifest.command, manifest.wall_clock_s, manifest.exit_code
    );
    manifest.exit_code
}

pub fn main() -> i32 {
    let args = Args::parse();
    env_logger::Builder::new()
        .filter_level(args.log_level)
        .format_timestamp(None)
        .init();
    if args.threads > 0 {
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads)
            .build_global()
        {
            error!("thread pool: {err}");
            return 1;
        }
    }
    execute(&args)
}
