use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CliError, Generator};
use crate::pipeline::PipelineConfig;

/// Everything needed to repeat a command. Paths are absolute; output names
/// are relative to the output directory, which is deliberately not recorded
/// so a replay elsewhere produces an identical manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub parallel_build: bool,
    pub invocation: Invocation,
    pub inputs: Vec<Fingerprint>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Invocation {
    Simulate {
        generator: Generator,
        n: usize,
        noise_sd: f64,
        seed: u64,
        restarts: usize,
    },
    Grid {
        config: PipelineConfig,
    },
    Report {
        run: PathBuf,
        kmax: usize,
        neighbors: usize,
        bins: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

/// SHA-256 of a file's contents.
pub fn fingerprint(path: &Path) -> Result<Fingerprint, CliError> {
    let mut file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        bytes += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok(Fingerprint {
        path: path.to_path_buf(),
        bytes,
        sha256: hex::encode(hasher.finalize()),
    })
}

impl Fingerprint {
    /// Fails when the file at `path` no longer has the recorded content.
    pub fn verify(&self) -> Result<(), CliError> {
        let now = fingerprint(&self.path)?;
        if now.sha256 != self.sha256 {
            return Err(CliError::Usage(format!(
                "{} changed since the run was recorded (sha256 {} now {})",
                self.path.display(),
                self.sha256,
                now.sha256
            )));
        }
        Ok(())
    }
}

impl RunManifest {
    pub fn new(invocation: Invocation) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            parallel_build: crate::par::is_parallel(),
            invocation,
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Wall-clock facts kept apart from the manifest so that the manifest
/// itself stays reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub command: String,
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
    pub threads: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_of_known_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        std::fs::write(&p, "abc").unwrap();
        let f = fingerprint(&p).unwrap();
        assert_eq!(f.bytes, 3);
        assert_eq!(f.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        f.verify().unwrap();
        std::fs::write(&p, "abd").unwrap();
        assert!(f.verify().is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = RunManifest::new(Invocation::Simulate {
            generator: Generator::Spirals,
            n: 500,
            noise_sd: 0.05,
            seed: 3,
            restarts: 25,
        });
        m.outputs.push("points.csv".into());
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"command\":\"simulate\""));
        assert_eq!(serde_json::from_str::<RunManifest>(&text).unwrap(), m);
    }
}
