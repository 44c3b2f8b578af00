//! Run manifests: every command records exactly what it was asked to do.
//!
//! The manifest hash covers the command name, the complete parameter set,
//! and the input/output paths — everything except the wall time and the hash
//! field itself, so repeated runs of the same request produce the same hash
//! while still recording how long they took. Output JSON documents embed the
//! hash of the manifest that produced them.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use sha2::{Digest, Sha256};

/// Format/version tag stamped into every manifest.
pub const ARTIFACT_VERSION: &str = "ptlab/0.1.0 lgrid/1";

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    /// Full parameter set; keys are flag names without dashes.
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// SHA-256 over everything above, hex-encoded.
    pub manifest_hash: String,
    /// Informational only; never part of the hash.
    pub wall_time_secs: f64,
}

#[derive(serde::Serialize)]
struct Hashed<'a> {
    artifact_version: &'a str,
    command: &'a str,
    parameters: &'a BTreeMap<String, serde_json::Value>,
    inputs: &'a [String],
    outputs: &'a [String],
}

impl RunManifest {
    pub fn new(
        command: &str,
        parameters: BTreeMap<String, serde_json::Value>,
        inputs: Vec<String>,
        outputs: Vec<String>,
    ) -> Self {
        let mut manifest = RunManifest {
            artifact_version: ARTIFACT_VERSION.to_owned(),
            command: command.to_owned(),
            parameters,
            inputs,
            outputs,
            manifest_hash: String::new(),
            wall_time_secs: 0.0,
        };
        manifest.manifest_hash = manifest.compute_hash();
        manifest
    }

    pub fn compute_hash(&self) -> String {
        let bytes = serde_json::to_vec(&Hashed {
            artifact_version: &self.artifact_version,
            command: &self.command,
            parameters: &self.parameters,
            inputs: &self.inputs,
            outputs: &self.outputs,
        })
        .expect("manifest serializes");
        let digest = Sha256::digest(bytes);
        let mut hex = String::with_capacity(64);
        for b in digest {
            use std::fmt::Write;
            let _ = write!(hex, "{b:02x}");
        }
        hex
    }
}

/// Convenience for building the parameter map.
pub fn params(entries: &[(&str, serde_json::Value)]) -> BTreeMap<String, serde_json::Value> {
    entries
        .iter()
        .map(|(k, v)| ((*k).to_owned(), v.clone()))
        .collect()
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_pretty<T: serde::Serialize>(value: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value).context("serializing report")?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    std::fs::write(path, to_json_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}
