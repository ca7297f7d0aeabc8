//! Config resolution, manifests and small CSV/text writers.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use ioredux_core::artifact::{file_hash, sha256_hex, RunManifest};
use ioredux_core::config::DEFAULT_CONFIG;
use ioredux_core::WorkflowConfig;

use crate::exit::{CliError, CliResult, Stage, CONFIG, PROVENANCE};

pub struct LoadedConfig {
    pub config: WorkflowConfig,
    pub path: Option<PathBuf>,
    pub hash: String,
}

impl LoadedConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let (text, path) = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::new(CONFIG, format!("cannot read config {}: {e}", p.display())))?;
                (text, Some(p.to_path_buf()))
            }
            None => (DEFAULT_CONFIG.to_string(), None),
        };
        let config = WorkflowConfig::from_toml_str(&text).stage(CONFIG)?;
        Ok(Self {
            config,
            path,
            hash: sha256_hex(text.as_bytes()),
        })
    }

    /// Directory that relative paths inside the config resolve against.
    pub fn base_dir(&self) -> PathBuf {
        self.path
            .as_ref()
            .and_then(|p| p.parent())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::new(CONFIG, format!("{}: {e}", path.display()))
}

/// Re-hashes `artifact` against the manifest its producing command wrote.
pub fn check_input(artifact: &Path) -> CliResult<String> {
    check_listed(artifact, artifact)
}

/// As [`check_input`] for a secondary output listed in `primary`'s manifest.
pub fn check_listed(artifact: &Path, primary: &Path) -> CliResult<String> {
    if !artifact.exists() {
        return Err(CliError::new(
            PROVENANCE,
            format!("missing input {}; run the upstream command first", artifact.display()),
        ));
    }
    let manifest = RunManifest::read(&RunManifest::manifest_path(primary)).stage(PROVENANCE)?;
    manifest.verify_output(artifact).stage(PROVENANCE)
}

pub struct Recorder {
    command: String,
    started_at: String,
    config_path: Option<String>,
    config_hash: String,
    inputs: BTreeMap<String, String>,
}

impl Recorder {
    pub fn start(command: &str, cfg: &LoadedConfig) -> Self {
        Self {
            command: command.to_string(),
            started_at: now(),
            config_path: cfg.path.as_ref().map(|p| p.display().to_string()),
            config_hash: cfg.hash.clone(),
            inputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, name: &str, hash: String) {
        self.inputs.insert(name.to_string(), hash);
    }

    /// Writes the manifest beside the first output.
    pub fn finish(self, outputs: &[&Path]) -> CliResult<()> {
        let mut hashes = BTreeMap::new();
        for p in outputs {
            hashes.insert(p.display().to_string(), file_hash(p).stage(CONFIG)?);
        }
        let manifest = RunManifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_path: self.config_path,
            config_hash: Some(self.config_hash),
            inputs: self.inputs,
            outputs: hashes,
            started_at: self.started_at,
            finished_at: now(),
        };
        manifest.write(&RunManifest::manifest_path(outputs[0])).stage(CONFIG)
    }
}

/// Rows of `label,v1,v2,...` under the given header, full precision.
pub fn labelled_csv(header: &[String], labels: &[String], rows: &[Vec<f64>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for (label, row) in labels.iter().zip(rows) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Four significant digits, for human-facing summaries.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    let e = x.abs().log10().floor() as i32;
    if (-4..6).contains(&e) {
        format!("{:.*}", (3 - e).max(0) as usize, x)
    } else {
        format!("{x:.3e}")
    }
}
