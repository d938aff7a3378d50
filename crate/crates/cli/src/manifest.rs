//! Run manifests: everything needed to repeat a command.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use weakphase::estimator::sha256_hex;

use crate::config::ConfigFile;
use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Command line without the program name, `--out-dir` or `--threads`.
    pub args: Vec<String>,
    pub config_path: Option<String>,
    pub resolved_config: Option<ConfigFile>,
    /// Command-specific values after defaults were applied.
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

/// Flags that only affect where or how fast a run happens.
const PLACEMENT_FLAGS: [&str; 2] = ["--out-dir", "--threads"];

pub fn reproducible_args(argv: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip_next = false;
    for a in argv {
        if skip_next {
            skip_next = false;
            continue;
        }
        if PLACEMENT_FLAGS.contains(&a.as_str()) {
            skip_next = true;
        } else if !PLACEMENT_FLAGS.iter().any(|f| a.starts_with(&format!("{f}="))) {
            out.push(a.clone());
        }
    }
    out
}

pub fn record_input(path: &Path) -> Result<FileRecord, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    Ok(FileRecord { path: path.display().to_string(), sha256: sha256_hex(&bytes) })
}

/// Writes files into one directory and remembers what was written.
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<FileRecord>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
        log::info!("wrote {}", path.display());
        self.written.push(FileRecord { path: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    /// Writes `<command>.manifest.json` listing every file written so far.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<(), Failure> {
        manifest.outputs = std::mem::take(&mut self.written);
        let name = format!("{}.manifest.json", manifest.command);
        self.write(&name, &to_json(&manifest))
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("manifest values serialize");
    bytes.push(b'\n');
    bytes
}
