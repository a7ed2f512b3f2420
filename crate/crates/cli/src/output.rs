use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

/// Everything needed to re-run a command and locate what it wrote.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub argv: Vec<String>,
    /// Resolved configuration, in the format the subcommand reads.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub version: String,
    pub git: Option<String>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_secs: f64,
}

/// The single writer for a run's artifacts. Every file is claimed before
/// any work starts, so an existing file stops the run early unless
/// `force` is set.
pub struct Outputs {
    dir: PathBuf,
    force: bool,
    claimed: Vec<PathBuf>,
    start: Instant,
}

impl Outputs {
    pub fn new(dir: &Path, force: bool, names: &[&str]) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut out = Self {
            dir: dir.to_path_buf(),
            force,
            claimed: Vec::new(),
            start: Instant::now(),
        };
        for name in names.iter().copied().chain(["manifest.json"]) {
            let p = out.dir.join(name);
            if p.exists() && !out.force {
                bail!("refusing to overwrite {} (pass --force)", p.display());
            }
            out.claimed.push(p);
        }
        Ok(out)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        debug_assert!(self.claimed.contains(&p), "{name} was not claimed");
        p
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    }

    pub fn finish(
        self,
        subcommand: &str,
        config: serde_json::Value,
        seeds: BTreeMap<String, u64>,
    ) -> Result<RunManifest> {
        let outputs: Vec<PathBuf> = self
            .claimed
            .iter()
            .filter(|p| p.exists() && !p.ends_with("manifest.json"))
            .cloned()
            .collect();
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            argv: std::env::args().collect(),
            config,
            seeds,
            version: env!("CARGO_PKG_VERSION").to_string(),
            git: option_env!("SLIDE_GIT_REV").map(str::to_string),
            outputs,
            wall_clock_secs: self.start.elapsed().as_secs_f64(),
        };
        self.write_json("manifest.json", &manifest)?;
        Ok(manifest)
    }
}
