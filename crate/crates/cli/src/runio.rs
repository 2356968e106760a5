//! Output plumbing: atomic file writes, the stdout sink, input digests,
//! and the run manifest that accompanies every file output.

use crate::{CliError, Log};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Where a subcommand's data goes. `-` on the command line means stdout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutTarget {
    Stdout,
    File(PathBuf),
}

impl OutTarget {
    pub fn parse(value: &str) -> OutTarget {
        if value == "-" {
            OutTarget::Stdout
        } else {
            OutTarget::File(PathBuf::from(value))
        }
    }

    pub fn describe(&self) -> String {
        match self {
            OutTarget::Stdout => "-".to_string(),
            OutTarget::File(path) => path.display().to_string(),
        }
    }
}

/// Write through a temp file in the destination directory, then rename,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let failed = |e: &dyn std::fmt::Display| CliError::Pipeline(format!("write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| failed(&e))?;
    tmp.write_all(bytes).map_err(|e| failed(&e))?;
    tmp.persist(path).map_err(|e| failed(&e))?;
    Ok(())
}

/// Machine-readable record of one run: the subcommand, the effective
/// configuration, the seed when one applies, and a SHA-256 digest per
/// input file. Deliberately timestamp-free so reruns are byte-identical.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub output: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, output: &OutTarget) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            config,
            seed: None,
            inputs: BTreeMap::new(),
            output: output.describe(),
            extra: None,
        }
    }

    pub fn digest_input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        self.inputs
            .insert(path.display().to_string(), format!("sha256:{digest:x}"));
        Ok(())
    }
}

/// Send the data to its sink, then the manifest: next to the file as
/// `<out>.manifest.json`, or onto the error stream when the data went to
/// stdout.
pub fn emit(out: &OutTarget, data: &[u8], manifest: &RunManifest, log: &Log) -> Result<(), CliError> {
    let manifest_json = serde_json::to_string_pretty(manifest)
        .map_err(|e| CliError::Pipeline(format!("manifest: {e}")))?;
    match out {
        OutTarget::Stdout => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(data)
                .and_then(|()| stdout.flush())
                .map_err(|e| CliError::Pipeline(format!("stdout: {e}")))?;
            log.info(format_args!("manifest: {manifest_json}"));
        }
        OutTarget::File(path) => {
            write_atomic(path, data)?;
            let mut manifest_path = path.as_os_str().to_owned();
            manifest_path.push(".manifest.json");
            let mut body = manifest_json.into_bytes();
            body.push(b'\n');
            write_atomic(Path::new(&manifest_path), &body)?;
            log.info(format_args!("wrote {}", path.display()));
        }
    }
    Ok(())
}
