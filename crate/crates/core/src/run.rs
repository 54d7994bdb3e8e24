use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io_util::write_atomic;

pub const MANIFEST_FILE: &str = "run_manifest.txt";

/// Record of one command run, written last into its output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: String,
    pub seed: u64,
    pub corpus_seed: u64,
    /// Named artifacts; each must exist when the manifest is written.
    pub artifacts: Vec<(String, PathBuf)>,
    pub wall_clock_secs: f64,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: String, seed: u64, corpus_seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            seed,
            corpus_seed,
            artifacts: Vec::new(),
            wall_clock_secs: 0.0,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn artifact(&mut self, name: &str, path: impl Into<PathBuf>) {
        self.artifacts.push((name.to_string(), path.into()));
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "corpus_seed = {}", self.corpus_seed);
        let _ = writeln!(s, "wall_clock_secs = {:.3}", self.wall_clock_secs);
        s.push_str("\n[artifacts]\n");
        for (name, path) in &self.artifacts {
            let _ = writeln!(s, "{name} = {}", path.display());
        }
        s.push_str("\n[config]\n");
        for line in self.config.lines() {
            let _ = writeln!(s, "  {line}");
        }
        s
    }

    /// Writes `run_manifest.txt` into `dir` after checking every artifact exists.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        if let Some((name, path)) = self.artifacts.iter().find(|(_, p)| !p.exists()) {
            return Err(Error::Validation(format!("artifact {name} missing at {}", path.display())));
        }
        let path = dir.join(MANIFEST_FILE);
        write_atomic(&path, self.to_text().as_bytes())?;
        Ok(path)
    }
}
