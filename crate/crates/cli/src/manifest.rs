//! Run manifests: config echo and hash, stage seeds, timings, artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seirsl_core::samplers::{Chain, SamplerKind};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub chain: usize,
    pub seed: u64,
    pub sampler: SamplerKind,
    pub divergences: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    /// Wall-clock seconds.
    pub warmup: f64,
    pub sampling: f64,
    pub total: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_gradient: Option<f64>,
}

impl ChainRecord {
    pub fn from_chain(index: usize, chain: &Chain) -> Self {
        ChainRecord {
            chain: index,
            seed: chain.seed,
            sampler: chain.sampler,
            divergences: chain.divergences,
            step_size: chain.step_size,
            warmup: chain.timings.warmup,
            sampling: chain.timings.sampling,
            total: chain.timings.total,
            mean_gradient: chain.timings.mean_gradient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub software_version: String,
    /// File name of the persisted config, relative to the output directory.
    pub config_file: String,
    /// SHA-256 of the persisted config file, hex encoded.
    pub config_hash: String,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    /// Stage wall-clock seconds.
    pub timings: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chains: Vec<ChainRecord>,
    pub artifacts: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn manifest_name(command: &str) -> String {
    format!("manifest_{command}.json")
}

pub fn config_name(command: &str) -> String {
    format!("config_{command}.toml")
}

impl RunManifest {
    /// Recomputes the config hash from the persisted file in `out`.
    pub fn verify_hash(&self, out: &Path) -> std::io::Result<bool> {
        let bytes = std::fs::read(out.join(&self.config_file))?;
        Ok(sha256_hex(&bytes) == self.config_hash)
    }

    /// A copy with every wall-clock field zeroed, for determinism checks.
    pub fn without_timings(&self) -> RunManifest {
        let mut m = self.clone();
        for v in m.timings.values_mut() {
            *v = 0.0;
        }
        for c in m.chains.iter_mut() {
            c.warmup = 0.0;
            c.sampling = 0.0;
            c.total = 0.0;
            c.mean_gradient = c.mean_gradient.map(|_| 0.0);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
