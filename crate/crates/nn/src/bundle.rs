//! Model bundle persistence: a directory holding `arch.json` (manifest) and
//! `weights.bin` (every tensor in manifest order, row-major, little-endian
//! IEEE-754 float64).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{NnError, Result};
use crate::params::ParameterSet;
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;
pub const ARCH_FILE: &str = "arch.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
const LOCK_FILE: &str = ".lock";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into `weights.bin`.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchManifest {
    pub format_version: u32,
    pub architecture: String,
    pub hyperparameters: Value,
    pub parameters: Vec<ParamEntry>,
    pub weights_crc32: u32,
}

/// A loaded bundle.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub architecture: String,
    pub hyperparameters: Value,
    pub params: ParameterSet,
}

/// Serialized tensors in manifest order.
pub fn encode_weights(params: &ParameterSet) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(params.num_weights() * 8);
    for p in params.iter() {
        for v in p.value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

/// Holds the advisory lock file for the duration of a bundle write.
struct WriteLock(PathBuf);

impl WriteLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    NnError::Io(std::io::Error::new(
                        e.kind(),
                        format!("bundle {} is locked by another writer", dir.display()),
                    ))
                } else {
                    NnError::Io(e)
                }
            })?;
        Ok(WriteLock(path))
    }
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub fn save_bundle(
    dir: &Path,
    architecture: &str,
    hyperparameters: Value,
    params: &ParameterSet,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let _lock = WriteLock::acquire(dir)?;
    let weights = encode_weights(params);
    let mut offset = 0u64;
    let parameters = params
        .iter()
        .map(|p| {
            let entry = ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                offset,
            };
            offset += p.value.len() as u64 * 8;
            entry
        })
        .collect();
    let manifest = ArchManifest {
        format_version: FORMAT_VERSION,
        architecture: architecture.to_string(),
        hyperparameters,
        parameters,
        weights_crc32: crc32fast::hash(&weights),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    fs::File::create(dir.join(WEIGHTS_FILE))?.write_all(&weights)?;
    fs::File::create(dir.join(ARCH_FILE))?.write_all(&json)?;
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<Bundle> {
    let manifest: ArchManifest = serde_json::from_slice(&fs::read(dir.join(ARCH_FILE))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(NnError::UnknownFormatVersion(manifest.format_version));
    }
    let weights = fs::read(dir.join(WEIGHTS_FILE))?;

    let mut expected_offset = 0u64;
    for (i, entry) in manifest.parameters.iter().enumerate() {
        if entry.offset != expected_offset {
            // The offset is consistent with everything before the previous
            // entry, so that entry's declared shape is the one that changed.
            let culprit = i.checked_sub(1).map_or(entry, |j| &manifest.parameters[j]);
            return Err(NnError::ParameterLayout {
                name: culprit.name.clone(),
                reason: format!(
                    "declared shape {:?} is inconsistent with the recorded byte offsets",
                    culprit.shape
                ),
            });
        }
        expected_offset += entry.shape.iter().product::<usize>() as u64 * 8;
    }
    if weights.len() as u64 != expected_offset {
        return Err(NnError::TruncatedWeights {
            expected: expected_offset,
            actual: weights.len() as u64,
        });
    }
    let actual_crc = crc32fast::hash(&weights);
    if actual_crc != manifest.weights_crc32 {
        return Err(NnError::ChecksumMismatch {
            expected: manifest.weights_crc32,
            actual: actual_crc,
        });
    }

    let mut params = ParameterSet::new();
    for entry in &manifest.parameters {
        let n: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let data = weights[start..start + n * 8]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        params.insert(entry.name.clone(), Tensor::new(&entry.shape, data)?)?;
    }
    Ok(Bundle {
        architecture: manifest.architecture,
        hyperparameters: manifest.hyperparameters,
        params,
    })
}

/// Checks that a loaded parameter set has exactly the names and shapes the
/// architecture expects, in order.
pub fn validate_layout(expected: &ParameterSet, loaded: &ParameterSet) -> Result<()> {
    for want in expected.iter() {
        let Ok(id) = loaded.id(&want.name) else {
            return Err(NnError::ParameterLayout {
                name: want.name.clone(),
                reason: "missing from bundle".into(),
            });
        };
        let got = loaded.value(id).shape();
        if got != want.value.shape() {
            return Err(NnError::ParameterLayout {
                name: want.name.clone(),
                reason: format!("bundle shape {got:?}, architecture expects {:?}", want.value.shape()),
            });
        }
    }
    if let Some(extra) = loaded.iter().find(|p| expected.id(&p.name).is_err()) {
        return Err(NnError::ParameterLayout {
            name: extra.name.clone(),
            reason: "not part of the architecture".into(),
        });
    }
    Ok(())
}

pub fn expect_architecture(bundle: &Bundle, expected: &str) -> Result<()> {
    if bundle.architecture == expected {
        Ok(())
    } else {
        Err(NnError::ArchitectureMismatch {
            expected: expected.to_string(),
            found: bundle.architecture.clone(),
        })
    }
}
