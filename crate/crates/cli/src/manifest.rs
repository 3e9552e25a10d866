use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

/// Sidecar describing how an output was produced.
///
/// Everything except `wall_time_ms` is a function of the command line, so
/// the output files themselves stay byte-identical between runs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub artifacts: Vec<PathBuf>,
    pub version: String,
    pub wall_time_ms: u128,
}

impl Manifest {
    pub fn new<C: Serialize>(
        command: &str,
        config: &C,
        seed: u64,
        artifacts: Vec<&PathBuf>,
        start: Instant,
    ) -> Self {
        Self {
            command: command.to_string(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            seed,
            artifacts: artifacts.into_iter().cloned().collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_ms: start.elapsed().as_millis(),
        }
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Writes `<artifact>.manifest.json`.
    pub fn write_beside(&self, artifact: &Path) -> anyhow::Result<()> {
        let mut name = artifact.as_os_str().to_owned();
        name.push(".manifest.json");
        self.write(Path::new(&name))
    }
}
