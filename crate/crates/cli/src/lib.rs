//! Batch front end: configuration, run manifests and the experiment steps
//! behind each command.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

use std::path::{Path, PathBuf};

use config::{Cli, CommandArgs, ConfigFile, GlobalConfig, Resolved};
use error::CliError;
use manifest::RunManifest;

/// Run directory used when `--out` is absent.
pub fn default_out(config: &Resolved, global: &GlobalConfig) -> PathBuf {
    match config {
        Resolved::GenData(_) | Resolved::Ingest(_) => global.data.clone(),
        other => PathBuf::from("runs").join(other.name()),
    }
}

/// Executes a resolved command into `out` and writes its run manifest.
pub fn run_resolved(config: &Resolved, global: &GlobalConfig, out: &Path) -> Result<RunManifest, CliError> {
    let record = commands::execute(config, global, out)?;
    let manifest = RunManifest::build(global, config, out, &record)?;
    manifest.write(out)?;
    Ok(manifest)
}

/// Re-runs the command recorded in `path` into `out` and checks that every
/// output matches the recorded digest.
pub fn replay(path: &Path, out: &Path) -> Result<RunManifest, CliError> {
    let recorded = RunManifest::read(path)?;
    let fresh = run_resolved(&recorded.config, &recorded.global, out)?;
    let diffs = recorded.differences(&fresh);
    if !diffs.is_empty() {
        return Err(CliError::ReplayMismatch(diffs.join("; ")));
    }
    Ok(fresh)
}

/// Entry point behind the binary; returns the manifest of the run.
pub fn run(cli: Cli) -> Result<RunManifest, CliError> {
    if let Some(n) = cli.global.workers {
        if n == 0 {
            return Err(CliError::config("--workers must be positive"));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let CommandArgs::Replay(r) = &cli.command {
        let recorded = RunManifest::read(&r.manifest)?;
        let out = match &cli.global.out {
            Some(o) => o.clone(),
            None => {
                let dir = r.manifest.parent().unwrap_or(Path::new("."));
                let name = dir
                    .file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                dir.with_file_name(format!("{name}-replay"))
            }
        };
        log::info!("replaying {} into {}", recorded.command, out.display());
        return replay(&r.manifest, &out);
    }
    let file = match &cli.global.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let global = config::resolve_global(&cli.global, &file)?;
    let resolved = config::resolve(&cli.command, &global, &file)?;
    let out = cli
        .global
        .out
        .clone()
        .unwrap_or_else(|| default_out(&resolved, &global));
    run_resolved(&resolved, &global, &out)
}
