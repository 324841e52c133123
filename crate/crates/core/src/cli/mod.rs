//! Command-line front end: configuration, orchestration and result files.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime or fit error.

pub mod app;
pub mod commands;
pub mod config;
pub mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Stamp written into every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_unix_s: Option<u64>,
}

impl Provenance {
    pub fn new(config_sha256: String, seed: Option<u64>, timestamps: bool) -> Self {
        let generated_unix_s = timestamps.then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        });
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config_sha256,
            seed,
            generated_unix_s,
        }
    }

    pub fn line(&self) -> String {
        let mut s = format!(
            "{} {} config_sha256={}",
            self.tool, self.version, self.config_sha256
        );
        if let Some(seed) = self.seed {
            s += &format!(" seed={seed}");
        }
        if let Some(t) = self.generated_unix_s {
            s += &format!(" generated_unix_s={t}");
        }
        s
    }
}

/// Output directory that stamps provenance into what it writes.
pub struct OutputDir {
    dir: PathBuf,
    prov: Provenance,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: &Path, prov: Provenance) -> CliResult<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            prov,
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn provenance(&self) -> &Provenance {
        &self.prov
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Subdirectory sharing this provenance except the config hash.
    pub fn child(&self, name: &str, config_sha256: String) -> CliResult<Self> {
        let prov = Provenance {
            config_sha256,
            ..self.prov.clone()
        };
        Self::create(&self.dir.join(name), prov)
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    /// CSV preceded by a `#` provenance line.
    pub fn csv(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> crate::Result<()>,
    ) -> CliResult<()> {
        let mut buf = format!("# {}\n", self.prov.line()).into_bytes();
        body(&mut buf)?;
        self.put(name, &buf)
    }

    /// Pretty JSON object with a `provenance` member added.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut v = serde_json::to_value(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        let prov =
            serde_json::to_value(&self.prov).map_err(|e| CliError::Runtime(e.to_string()))?;
        if let serde_json::Value::Object(m) = &mut v {
            m.insert("provenance".into(), prov);
        } else {
            v = serde_json::json!({ "provenance": prov, "value": v });
        }
        let mut text =
            serde_json::to_string_pretty(&v).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    pub fn svg(&mut self, name: &str, plot: &plot::Plot) -> CliResult<()> {
        let body = plot::render(plot)?;
        let text = format!("<!-- {} -->\n{body}\n", self.prov.line());
        self.put(name, text.as_bytes())
    }
}
