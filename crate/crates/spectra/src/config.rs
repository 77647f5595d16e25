//! TOML model configuration: the base shift, the center cocycle, and
//! run defaults.

use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Result, SpectraError};
use crate::symbolic::{CenterCocycle, SymbolicSystem, Word};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub system: SystemSection,
    pub cocycle: CocycleSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub alphabet: usize,
    /// Forbidden length-2 words, e.g. ["11"]; empty for the full shift.
    #[serde(default)]
    pub forbidden: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocycleSection {
    pub depth: usize,
    /// Either one value per symbol (depth 1) or one per admissible
    /// depth-word as `{ word = value }` entries.
    #[serde(default)]
    pub per_symbol: Option<Vec<f64>>,
    #[serde(default)]
    pub per_word: Option<std::collections::BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub q_min: Option<f64>,
    #[serde(default)]
    pub q_max: Option<f64>,
    #[serde(default)]
    pub q_steps: Option<usize>,
}

impl ModelConfig {
    pub fn from_str_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| SpectraError::Config(format!("config parse: {e}")))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let raw = std::fs::read_to_string(path)?;
        let cfg = Self::from_str_toml(&raw)?;
        let hash = hex_digest(&raw);
        Ok((cfg, hash))
    }

    pub fn build(&self) -> Result<(SymbolicSystem, CenterCocycle)> {
        let forbidden: Vec<Word> = self
            .system
            .forbidden
            .iter()
            .map(|s| Word::parse(s))
            .collect::<Result<_>>()?;
        let sys = if forbidden.is_empty() {
            SymbolicSystem::full_shift(self.system.alphabet)?
        } else {
            SymbolicSystem::from_forbidden(self.system.alphabet, &forbidden)?
        };
        let c = match (&self.cocycle.per_symbol, &self.cocycle.per_word) {
            (Some(vals), None) => {
                if self.cocycle.depth != 1 {
                    return Err(SpectraError::Config(
                        "per_symbol cocycle requires depth = 1".into(),
                    ));
                }
                CenterCocycle::per_symbol(&sys, vals)?
            }
            (None, Some(map)) => {
                let mut vals = std::collections::BTreeMap::new();
                for (w, &v) in map {
                    vals.insert(Word::parse(w)?, v);
                }
                CenterCocycle::new(&sys, self.cocycle.depth, &vals)?
            }
            _ => {
                return Err(SpectraError::Config(
                    "cocycle needs exactly one of per_symbol / per_word".into(),
                ))
            }
        };
        Ok((sys, c))
    }
}

pub fn hex_digest(raw: &str) -> String {
    let mut h = Sha256::new();
    h.update(raw.as_bytes());
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BE: &str = r#"
[system]
alphabet = 2

[cocycle]
depth = 1
per_symbol = [-1.3862943611198906, 0.6931471805599453]

[run]
seed = 7
"#;

    #[test]
    fn parses_reference_model() {
        let cfg = ModelConfig::from_str_toml(BE).unwrap();
        let (sys, c) = cfg.build().unwrap();
        assert_eq!(sys.alphabet_size(), 2);
        assert_eq!(c.depth(), 1);
        assert_eq!(cfg.run.seed, Some(7));
    }

    #[test]
    fn golden_mean_model() {
        let cfg = ModelConfig::from_str_toml(
            r#"
[system]
alphabet = 2
forbidden = ["11"]

[cocycle]
depth = 1
per_symbol = [0.0, 1.0]
"#,
        )
        .unwrap();
        let (sys, _) = cfg.build().unwrap();
        assert!(!sys.allowed(1, 1));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_cocycle() {
        assert!(ModelConfig::from_str_toml("[system]\nalphabet = 2\nbogus = 1").is_err());
        let cfg = ModelConfig::from_str_toml(
            "[system]\nalphabet = 2\n\n[cocycle]\ndepth = 1\n",
        )
        .unwrap();
        assert!(cfg.build().is_err());
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(hex_digest("x"), hex_digest("x"));
        assert_ne!(hex_digest("x"), hex_digest("y"));
    }
}
