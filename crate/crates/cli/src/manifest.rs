//! Run manifests written beside each command's primary output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use simmer_core::seed::fnv1a64;

static THREADS: OnceLock<Option<usize>> = OnceLock::new();

/// The global `--threads` setting, reported with each command's own flags.
pub fn record_threads(threads: Option<usize>) {
    let _ = THREADS.set(threads);
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub flags: BTreeMap<String, serde_json::Value>,
    /// Input path to FNV-1a 64 digest of its bytes, as hex.
    pub inputs: BTreeMap<String, String>,
    pub version: String,
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch; the only field that varies between
    /// otherwise identical runs.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(subcommand: &str, args: &impl Serialize) -> Result<Self> {
        let mut flags: BTreeMap<String, serde_json::Value> = match serde_json::to_value(args)? {
            serde_json::Value::Object(m) => m.into_iter().collect(),
            _ => BTreeMap::new(),
        };
        flags.insert("threads".into(), THREADS.get().copied().flatten().into());
        let seed = flags.get("seed").and_then(serde_json::Value::as_u64);
        Ok(Self {
            subcommand: subcommand.to_string(),
            flags,
            inputs: BTreeMap::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(
            path.display().to_string(),
            format!("{:016x}", fnv1a64(0, &bytes)),
        );
        Ok(())
    }

    /// Writes `<output>.manifest.json`.
    pub fn write_beside(&self, output: &Path) -> Result<PathBuf> {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = PathBuf::from(name);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
