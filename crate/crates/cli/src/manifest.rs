//! Output bookkeeping: every artifact is written through [`Outputs`] and
//! listed with its SHA-256 in the run manifest.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputRecord {
    /// Relative to the manifest's directory.
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub config: serde_json::Value,
    pub outputs: Vec<OutputRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writer confined to one directory.
#[derive(Debug)]
pub struct Outputs {
    root: PathBuf,
    manifest_name: String,
    records: Vec<OutputRecord>,
}

impl Outputs {
    /// Outputs inside directory `dir`, manifest at `dir/manifest.json`.
    pub fn in_dir(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            root: dir.to_path_buf(),
            manifest_name: "manifest.json".into(),
            records: Vec::new(),
        })
    }

    /// A single-file target: `path` itself plus `<stem>.manifest.json` beside it.
    pub fn for_file(path: &Path) -> Result<(Self, String), CliError> {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| CliError::Usage(format!("--out {} is not a file path", path.display())))?
            .to_string();
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(&name).to_string();
        let root = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok((
            Self {
                root,
                manifest_name: format!("{stem}.manifest.json"),
                records: Vec::new(),
            },
            name,
        ))
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.records.retain(|r| r.path != rel);
        self.records.push(OutputRecord {
            path: rel.to_string(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json(&mut self, rel: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    pub fn finish(
        mut self,
        command: &str,
        seed: Option<u64>,
        inputs: Vec<String>,
        config: serde_json::Value,
    ) -> Result<RunManifest, CliError> {
        self.records.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            command: command.to_string(),
            tool_version: format!("heartscape {}", env!("CARGO_PKG_VERSION")),
            seed,
            inputs,
            config,
            outputs: self.records,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        let path = self.root.join(&self.manifest_name);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
