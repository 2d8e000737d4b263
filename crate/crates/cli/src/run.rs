//! Run directories and their manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub file: String,
    pub kind: &'static str,
    pub bytes: u64,
}

/// Contents of `manifest.json`. Carries no wall-clock data so that repeated
/// runs with the same settings produce identical manifests.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub parallel: bool,
    pub config_file: Option<String>,
    pub config: BTreeMap<String, Value>,
    pub status: &'static str,
    pub exit_code: Option<i32>,
    pub error: Option<String>,
    pub artifacts: Vec<Artifact>,
}

/// A fresh `<command>-<timestamp>[-tag]` directory. The single writer of
/// every file inside it.
pub struct RunDir {
    path: PathBuf,
    manifest: Manifest,
}

impl RunDir {
    pub fn create(
        base: &Path,
        command: &str,
        tag: Option<&str>,
        config_file: Option<&Path>,
        config: BTreeMap<String, Value>,
    ) -> Result<Self, CliError> {
        fs::create_dir_all(base)?;
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
        let mut stem = format!("{command}-{stamp}");
        if let Some(t) = tag {
            if t.is_empty() || !t.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(CliError::Config(format!("tag `{t}` must be non-empty [A-Za-z0-9_-]")));
            }
            stem.push('-');
            stem.push_str(t);
        }
        let path = claim_dir(base, &stem)?;
        let run = Self {
            path,
            manifest: Manifest {
                command: command.to_string(),
                version: VERSION.to_string(),
                parallel: thinobs::par::is_parallel(),
                config_file: config_file.map(|p| p.display().to_string()),
                config,
                status: "running",
                exit_code: None,
                error: None,
                artifacts: Vec::new(),
            },
        };
        run.write_manifest()?;
        Ok(run)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value)?;
        self.write_bytes(name, "json", text.as_bytes())
    }

    /// Writes preformatted JSON text (for dumps the core library renders itself).
    pub fn write_json_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        self.write_bytes(name, "json", text.as_bytes())
    }

    /// Renders a CSV through `fill` and records it.
    pub fn write_csv<F>(&mut self, name: &str, fill: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
    {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.write_bytes(name, "csv", &buf)
    }

    fn write_bytes(&mut self, name: &str, kind: &'static str, bytes: &[u8]) -> Result<(), CliError> {
        if self.manifest.artifacts.iter().any(|a| a.file == name) || name == "manifest.json" {
            return Err(CliError::Config(format!("artifact `{name}` written twice")));
        }
        let mut f = fs::File::create(self.path.join(name))?;
        f.write_all(bytes)?;
        f.sync_all()?;
        self.manifest.artifacts.push(Artifact { file: name.to_string(), kind, bytes: bytes.len() as u64 });
        // keep the manifest current in case a later step fails
        self.write_manifest()
    }

    pub fn finish(mut self, outcome: &Result<(), CliError>) -> Result<PathBuf, CliError> {
        match outcome {
            Ok(()) => {
                self.manifest.status = "ok";
                self.manifest.exit_code = Some(0);
            }
            Err(e) => {
                self.manifest.status = "failed";
                self.manifest.exit_code = Some(e.exit_code());
                self.manifest.error = Some(e.to_string());
            }
        }
        self.write_manifest()?;
        Ok(self.path)
    }

    fn write_manifest(&self) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(&self.manifest)?;
        let tmp = self.path.join(".manifest.json.tmp");
        fs::write(&tmp, text)?;
        fs::rename(tmp, self.path.join("manifest.json"))?;
        Ok(())
    }
}

/// Creates `base/stem`, or `base/stem-2`, `-3`, … if taken.
fn claim_dir(base: &Path, stem: &str) -> Result<PathBuf, CliError> {
    for k in 1..1000 {
        let name = if k == 1 { stem.to_string() } else { format!("{stem}-{k}") };
        let p = base.join(name);
        match fs::create_dir(&p) {
            Ok(()) => return Ok(p),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(CliError::Config(format!("could not claim a run directory for {stem}")))
}
