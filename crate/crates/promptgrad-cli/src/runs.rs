//! Run-directory management: one directory per run, never overwritten
//! without --force, with a timestamped log kept apart from the
//! deterministic outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::{CliError, OUT_ROOT_ENV};

/// An opened run directory.
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Resolves and creates the output directory. `--out` wins; otherwise
    /// `$PROMPTGRAD_OUT_ROOT/<command>` (root defaults to `runs`). An
    /// existing non-empty directory is refused unless `force` is set.
    pub fn open(out: Option<&Path>, command: &str, force: bool) -> Result<Self, CliError> {
        let path = match out {
            Some(p) => p.to_path_buf(),
            None => {
                let root =
                    std::env::var(OUT_ROOT_ENV).unwrap_or_else(|_| "runs".to_string());
                Path::new(&root).join(command)
            }
        };
        if path.exists() {
            let non_empty = fs::read_dir(&path)
                .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?
                .next()
                .is_some();
            if non_empty && !force {
                return Err(CliError::usage(format!(
                    "output directory {} is not empty (use --force to overwrite)",
                    path.display()
                )));
            }
        }
        fs::create_dir_all(&path)
            .map_err(|e| CliError::usage(format!("cannot create {}: {e}", path.display())))?;
        Ok(RunDir { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Echoes the resolved configuration (deterministic JSON).
    pub fn write_resolved_config<C: Serialize>(&self, config: &C) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(config)
            .map_err(|e| CliError::usage(format!("cannot serialize config: {e}")))?;
        fs::write(self.file("resolved_config.json"), text)
            .map_err(|e| CliError::usage(format!("cannot write resolved config: {e}")))?;
        Ok(())
    }

    /// Appends a timestamped line to the run log (the one non-deterministic
    /// file in a run directory).
    pub fn log(&self, line: &str) {
        let stamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        if let Ok(mut f) = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.file("log.txt"))
        {
            let _ = writeln!(f, "[{stamp}] {line}");
        }
    }
}

/// Reads an optional JSON config file into a partial-values struct.
pub fn load_config_file<C: serde::de::DeserializeOwned + Default>(
    path: Option<&Path>,
) -> Result<C, CliError> {
    match path {
        None => Ok(C::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("bad config {}: {e}", p.display())))
        }
    }
}
