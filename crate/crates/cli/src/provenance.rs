//! Per-directory provenance stamps.
//!
//! A stage writes its artifacts, then `provenance.txt` naming the stage, the
//! hash of the settings it depends on, the seed, the tool version, every
//! artifact and the settings themselves. A directory whose stamp matches and
//! whose artifacts all exist is up to date.

use std::fs;
use std::io;
use std::path::Path;

use crate::VERSION;

pub const PROVENANCE_FILE: &str = "provenance.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub artifacts: Vec<String>,
    pub settings: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(stage: &str, config_hash: String, seed: u64, settings: Vec<(String, String)>) -> Self {
        Provenance {
            stage: stage.to_string(),
            config_hash,
            seed,
            version: VERSION.to_string(),
            artifacts: Vec::new(),
            settings,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "stage={}\nconfig_hash={}\nseed={}\nversion={}\n",
            self.stage, self.config_hash, self.seed, self.version
        );
        for a in &self.artifacts {
            s.push_str(&format!("artifact={a}\n"));
        }
        for (k, v) in &self.settings {
            s.push_str(&format!("setting.{k}={v}\n"));
        }
        s
    }

    pub fn parse(text: &str) -> Option<Self> {
        let mut p = Provenance::new("", String::new(), 0, Vec::new());
        p.version.clear();
        for line in text.lines() {
            let (k, v) = line.split_once('=')?;
            match k {
                "stage" => p.stage = v.to_string(),
                "config_hash" => p.config_hash = v.to_string(),
                "seed" => p.seed = v.parse().ok()?,
                "version" => p.version = v.to_string(),
                "artifact" => p.artifacts.push(v.to_string()),
                _ => p.settings.push((k.strip_prefix("setting.")?.to_string(), v.to_string())),
            }
        }
        Some(p)
    }

    pub fn read(dir: &Path) -> Option<Self> {
        Self::parse(&fs::read_to_string(dir.join(PROVENANCE_FILE)).ok()?)
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::write(dir.join(PROVENANCE_FILE), self.to_text())
    }

    /// True when `dir` holds a stamp for the same stage and hash and every
    /// listed artifact is present.
    pub fn is_current(dir: &Path, stage: &str, config_hash: &str) -> bool {
        match Self::read(dir) {
            Some(p) => {
                p.stage == stage
                    && p.config_hash == config_hash
                    && p.artifacts.iter().all(|a| dir.join(a).is_file())
            }
            None => false,
        }
    }
}
