//! Output directory bookkeeping: every file written by a run is recorded so a failed run can
//! remove what it produced.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

use crate::Failure;

pub struct Artifacts {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn open(dir: &Path) -> Result<Self, Failure> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))
            .map_err(Failure::Runtime)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, Failure> {
        let path = self.path(name);
        // Record before writing so a partially written file is also removed.
        self.written.push(path.clone());
        fs::write(&path, contents)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Runtime)?;
        Ok(path)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Removes the files of this run, and the directory if the run created it and it is empty.
    pub fn discard(self) {
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}
