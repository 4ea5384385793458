//! Resolved experiment configuration and its provenance hash.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenKind {
    Sbm,
    Er,
}

/// `sbm:n,d,lambda` or `er:n,d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub kind: GenKind,
    pub n: usize,
    pub d: f64,
    pub lambda: f64,
}

impl FromStr for GenSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CliError::Usage(format!("bad generator spec {s:?}; expected sbm:n,d,lambda or er:n,d"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        let n = parts.first().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let d = parts.get(1).and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        match (kind, parts.len()) {
            ("sbm", 3) => Ok(Self {
                kind: GenKind::Sbm,
                n,
                d,
                lambda: parts[2].parse().map_err(|_| bad())?,
            }),
            ("er", 2) => Ok(Self {
                kind: GenKind::Er,
                n,
                d,
                lambda: 0.0,
            }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for GenSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            GenKind::Sbm => write!(f, "sbm:{},{},{}", self.n, self.d, self.lambda),
            GenKind::Er => write!(f, "er:{},{}", self.n, self.d),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SignMode {
    /// All couplings `+β`.
    Ferro,
    /// Independent uniform signs `±β`.
    Random,
}

/// Everything that determines a run's output. Thread count and output paths
/// are deliberately absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub subcommand: String,
    pub generator: Option<GenSpec>,
    pub input: Option<String>,
    pub signs: SignMode,
    pub centered: bool,
    pub epsilon: f64,
    pub beta: f64,
    pub field: String,
    pub seed: u64,
    pub d: Option<f64>,
    pub strict: bool,
    pub knobs: serde_json::Map<String, serde_json::Value>,
}

impl ExperimentConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CliError> {
        serde_json::from_str(s).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn knob<T: serde::de::DeserializeOwned>(&self, key: &str) -> Option<T> {
        self.knobs.get(key).and_then(|v| serde_json::from_value(v.clone()).ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gen_spec_round_trip() {
        for s in ["sbm:100,5,0.5", "er:30,2.5"] {
            let g: GenSpec = s.parse().unwrap();
            assert_eq!(g.to_string().parse::<GenSpec>().unwrap(), g);
        }
        for bad in ["sbm:100,5", "er:10", "foo:1,2", "sbm:x,1,0", "er:10,2,3"] {
            assert!(bad.parse::<GenSpec>().is_err(), "{bad}");
        }
    }
}
