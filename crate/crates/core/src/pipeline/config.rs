use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generate::CorpusConfig;
use crate::bayes::{BayesConfig, SviConfig};
use crate::decoding::BeamConfig;
use crate::error::{Error, Result};
use crate::rules::{MeteorParams, UtilityKind};
use crate::seqmodel::{SourceConditioning, TabularConfig, DEFAULT_NODE_BUDGET};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Analyses {
    pub exact_mode: bool,
    pub stats: bool,
    pub bayes: bool,
}

impl Default for Analyses {
    fn default() -> Self {
        Self {
            exact_mode: true,
            stats: true,
            bayes: true,
        }
    }
}

/// Everything a pipeline run depends on; a run is a function of this value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub heldout: usize,
    pub model: TabularConfig,
    /// Samples per source for MBR, the oracle and the sample statistics.
    pub samples: usize,
    /// Replicates of the single-sample rule.
    pub replicates: usize,
    pub beam: BeamConfig,
    pub utility: UtilityKind,
    pub meteor: MeteorParams,
    /// Node budget for exact mode search, per source.
    pub exact_budget: u64,
    pub analyses: Analyses,
    pub bayes: BayesConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            heldout: 200,
            model: TabularConfig {
                order: 1,
                smoothing: 0.01,
                max_len: 25,
                conditioning: SourceConditioning::Aligned { window: 0 },
            },
            samples: 30,
            replicates: 30,
            beam: BeamConfig::default(),
            utility: UtilityKind::MeteorLite,
            meteor: MeteorParams::default(),
            exact_budget: DEFAULT_NODE_BUDGET,
            analyses: Analyses::default(),
            bayes: BayesConfig {
                svi: SviConfig {
                    steps: 2000,
                    elbo_every: 10,
                    ..SviConfig::default()
                },
                ..BayesConfig::default()
            },
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Sets the run seed and the corpus seed together.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.corpus.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.model.validate()?;
        self.beam.validate()?;
        self.meteor.validate()?;
        self.bayes.svi.validate()?;
        if self.heldout == 0 {
            return Err(Error::config("heldout must be positive"));
        }
        if self.samples == 0 || self.replicates == 0 {
            return Err(Error::config("samples and replicates must be positive"));
        }
        if self.replicates < 2 {
            return Err(Error::config("at least two replicates are needed for a standard deviation"));
        }
        Ok(())
    }

    /// Reads a TOML (`.toml`) or JSON document; missing fields take defaults.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let config: RunConfig = if is_toml {
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_documents_fill_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("run.toml");
        std::fs::write(&toml_path, "heldout = 50\nseed = 4\n[corpus]\npairs = 800\n[beam]\nwidth = 3\n").unwrap();
        let c = RunConfig::from_path(&toml_path).unwrap();
        assert_eq!((c.heldout, c.seed, c.corpus.pairs, c.beam.width), (50, 4, 800, 3));
        assert_eq!(c.samples, RunConfig::default().samples);

        let json_path = dir.path().join("run.json");
        std::fs::write(&json_path, r#"{"samples": 12, "utility": "unigram-f1"}"#).unwrap();
        let c = RunConfig::from_path(&json_path).unwrap();
        assert_eq!(c.samples, 12);
        assert_eq!(c.utility, UtilityKind::UnigramF1);
    }

    #[test]
    fn bad_documents_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.json");
        std::fs::write(&p, r#"{"samples": "many"}"#).unwrap();
        assert!(matches!(RunConfig::from_path(&p), Err(Error::Config(_))));
        std::fs::write(&p, r#"{"samples": 0}"#).unwrap();
        assert!(matches!(RunConfig::from_path(&p), Err(Error::Config(_))));
        assert_eq!(RunConfig::from_path(dir.path().join("missing.json")).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn default_round_trips_through_both_formats() {
        let c = RunConfig::default().with_seed(3);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), c);
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), c);
    }
}
