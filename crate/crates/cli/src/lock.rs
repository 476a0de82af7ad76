//! One command per out_dir at a time.

use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use crate::error::CliError;

pub const LOCK_FILE: &str = ".forge.lock";

/// Exclusive claim on an out_dir, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    /// Create `out_dir` if needed and take its lock file. Fails with
    /// [`CliError::Locked`] when the file already exists.
    pub fn acquire(out_dir: &Path) -> Result<RunLock, CliError> {
        fs::create_dir_all(out_dir).map_err(|source| CliError::Io { path: out_dir.to_path_buf(), source })?;
        let path = out_dir.join(LOCK_FILE);
        let mut file = match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == ErrorKind::AlreadyExists => return Err(CliError::Locked(path)),
            Err(source) => return Err(CliError::Io { path, source }),
        };
        writeln!(file, "{}", std::process::id()).map_err(|source| CliError::Io { path: path.clone(), source })?;
        Ok(RunLock { path })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_acquire_fails_until_release() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let first = RunLock::acquire(&out).unwrap();
        assert!(matches!(RunLock::acquire(&out), Err(CliError::Locked(p)) if p.ends_with(LOCK_FILE)));
        drop(first);
        assert!(!out.join(LOCK_FILE).exists());
        RunLock::acquire(&out).unwrap();
    }
}
