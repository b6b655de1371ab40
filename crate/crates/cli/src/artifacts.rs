use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use rsl_core::{Metrics, RunConfig};

use crate::error::CliResult;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub dataset: Option<String>,
    pub material: Option<String>,
    pub units: String,
    pub timestamp_unix: u64,
    pub artifacts: Vec<String>,
}

pub fn config_hash(cfg: &RunConfig) -> String {
    Sha256::digest(cfg.to_toml_string().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory that records every artifact written through it.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root)?;
        Ok(OutDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
        fs::write(self.root.join(name), contents)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn csv(&mut self, name: &str) -> CliResult<csv::Writer<fs::File>> {
        let w = csv::Writer::from_path(self.root.join(name))?;
        self.written.push(name.to_string());
        Ok(w)
    }

    pub fn finish(mut self, mut manifest: RunManifest, cfg: &RunConfig) -> CliResult<()> {
        self.write("config.toml", cfg.to_toml_string())?;
        self.written.sort();
        manifest.artifacts = std::mem::take(&mut self.written);
        manifest.artifacts.push("manifest.json".into());
        let json = serde_json::to_string_pretty(&manifest).map_err(anyhow::Error::from)?;
        fs::write(self.root.join("manifest.json"), json + "\n")?;
        Ok(())
    }
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn metrics_report(m: &Metrics) -> String {
    format!("{m}\n")
}

pub fn write_scatter(out: &mut OutDir, name: &str, observed: &[f64], predicted: &[f64]) -> CliResult<()> {
    let mut w = out.csv(name)?;
    w.write_record(["index", "observed", "predicted"])?;
    for (i, (o, p)) in observed.iter().zip(predicted).enumerate() {
        w.write_record([i.to_string(), o.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
