use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use oanbv::Result;
use serde::Serialize;
use tempfile::TempDir;

/// Artifacts are written into a sibling temporary directory and only moved
/// into the output directory once every file is complete.
pub struct Staging {
    dir: TempDir,
    out: PathBuf,
    files: Vec<String>,
}

impl Staging {
    pub fn new(out: &Path) -> Result<Staging> {
        let parent = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let dir = tempfile::Builder::new().prefix(".oanbv-staging-").tempdir_in(&parent)?;
        Ok(Staging {
            dir,
            out: out.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Create `name` in the staging area and hand a buffered writer to `f`.
    pub fn write<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let mut w = BufWriter::new(File::create(self.dir.path().join(name))?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Move every staged file into the output directory.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.out)?;
        let mut moved = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let dst = self.out.join(name);
            fs::rename(self.dir.path().join(name), &dst)?;
            moved.push(dst);
        }
        Ok(moved)
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize, E: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a C,
    pub seeds: &'a [u64],
    /// How a method plans after a detection failure.
    pub detection_failure_rule: &'static str,
    pub files: &'a [String],
    /// Command-specific results.
    pub extra: E,
}

pub const DETECTION_FAILURE_RULE: &str =
    "plan from the last valid mesh hypothesis; before any valid hypothesis, from the unaligned initial mesh";
