//! Output directories and run metadata.

use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Serialize;

use crate::config::ExperimentConfig;

pub const GIT_DESCRIBE: &str = env!("PENREFLECT_GIT_DESCRIBE");

/// Creates the output directory of one run.
pub fn prepare_directory(base: &Path, command: &str, timestamped: bool, now: DateTime<Utc>) -> io::Result<PathBuf> {
    if !timestamped {
        fs::create_dir_all(base)?;
        return Ok(base.to_path_buf());
    }
    let stem = format!("{command}-{}", now.format("%Y%m%dT%H%M%S%.3fZ"));
    fs::create_dir_all(base)?;
    let mut attempt = 0;
    loop {
        let name = if attempt == 0 {
            stem.clone()
        } else {
            format!("{stem}-{attempt}")
        };
        let dir = base.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => attempt += 1,
            Err(e) => return Err(e),
        }
    }
}

pub fn create(path: &Path) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    fs::write(path, text + "\n")
}

/// Companion metadata written next to every result set.
#[derive(Debug, Serialize)]
pub struct Metadata<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub git_describe: &'a str,
    pub started_at: String,
    pub wall_clock_seconds: f64,
    pub master_seed: u64,
    pub workers: Option<usize>,
    pub outputs: Vec<String>,
    pub config: &'a ExperimentConfig,
}
