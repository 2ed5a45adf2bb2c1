//! Versioned JSON model file with a SHA-256 checksum over its body.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use diffhash::HashModel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const FORMAT_VERSION: u32 = 1;

/// Training settings echoed into the model file and the metrics CSVs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: String,
    pub m: usize,
    pub gamma: f64,
    pub levels: usize,
    pub mode: String,
    pub rates: String,
    pub weighting: String,
    pub positives: usize,
    pub negatives: usize,
    pub pair_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_prime: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<String>,
    pub n: usize,
    pub n_prime: usize,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_seed: Option<u64>,
}

impl TrainConfig {
    /// `(key, value)` columns for CSV echoes, in a fixed order.
    pub fn columns(&self) -> Vec<(String, String)> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        vec![
            ("method".into(), self.method.clone()),
            ("m".into(), self.m.to_string()),
            ("gamma".into(), self.gamma.to_string()),
            ("levels".into(), self.levels.to_string()),
            ("mode".into(), self.mode.clone()),
            ("rates".into(), self.rates.clone()),
            ("weighting".into(), self.weighting.clone()),
            ("positives".into(), self.positives.to_string()),
            ("negatives".into(), self.negatives.to_string()),
            ("pair_seed".into(), self.pair_seed.to_string()),
            ("l".into(), opt(self.l.map(|v| v.to_string()))),
            ("l_prime".into(), opt(self.l_prime.map(|v| v.to_string()))),
            ("basis_seed".into(), opt(self.basis_seed.map(|v| v.to_string()))),
            ("bandwidth".into(), opt(self.bandwidth.clone())),
            ("n".into(), self.n.to_string()),
            ("n_prime".into(), self.n_prime.to_string()),
            ("k".into(), self.k.to_string()),
            ("data_seed".into(), opt(self.data_seed.map(|v| v.to_string()))),
        ]
    }
}

#[derive(Serialize)]
struct Body<'a> {
    format_version: u32,
    config: &'a TrainConfig,
    model: &'a HashModel,
}

#[derive(Serialize, Deserialize)]
struct Document {
    format_version: u32,
    config: TrainConfig,
    model: HashModel,
    checksum: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub config: TrainConfig,
    pub model: HashModel,
}

fn checksum(config: &TrainConfig, model: &HashModel) -> Result<String> {
    let body = serde_json::to_vec(&Body {
        format_version: FORMAT_VERSION,
        config,
        model,
    })?;
    Ok(hex::encode(Sha256::digest(&body)))
}

impl ModelFile {
    pub fn new(config: TrainConfig, model: HashModel) -> Self {
        Self { config, model }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = Document {
            format_version: FORMAT_VERSION,
            checksum: checksum(&self.config, &self.model)?,
            config: self.config.clone(),
            model: self.model.clone(),
        };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Document = serde_json::from_str(text).context("malformed model file")?;
        if doc.format_version != FORMAT_VERSION {
            bail!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                doc.format_version
            );
        }
        let expected = checksum(&doc.config, &doc.model)?;
        if expected != doc.checksum {
            bail!("model checksum mismatch: file says {}, content hashes to {expected}", doc.checksum);
        }
        doc.model.validate()?;
        Ok(Self {
            config: doc.config,
            model: doc.model,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("invalid model file {}", path.display()))
    }
}
