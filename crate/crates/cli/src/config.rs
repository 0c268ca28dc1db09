//! Experiment configuration: one TOML file, flag overrides on top, and a
//! single global seed that every module seed is derived from.

use std::path::{Path, PathBuf};

use nile::baselines::{ClassifierConfig, EtpaClassifierInput};
use nile::corpus::WorldConfig;
use nile::generator::GeneratorConfig;
use nile::processor::ProcessorConfig;
use nile::seed::{derive_seed, sha256_hex};
use nile::{NileError, Result};
use serde::{Deserialize, Serialize};

/// Environment variable that overrides the output root.
pub const OUT_ENV: &str = "NILE_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// The only seed that matters: module `seed` fields below are replaced
    /// by seeds derived from this one when the config is resolved.
    pub seed: u64,
    pub world: WorldConfig,
    pub generator: GeneratorConfig,
    pub processor: ProcessorConfig,
    pub baseline: BaselineConfig,
    pub training: TrainingConfig,
    pub data: DataConfig,
    pub paths: PathsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            world: WorldConfig::default(),
            generator: GeneratorConfig::default(),
            processor: ProcessorConfig::default(),
            baseline: BaselineConfig::default(),
            training: TrainingConfig::default(),
            data: DataConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub classifier: ClassifierConfig,
    pub etpa_input: EtpaInput,
}

/// Serializable mirror of [`EtpaClassifierInput`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EtpaInput {
    #[default]
    Gold,
    Generated,
}

impl From<EtpaInput> for EtpaClassifierInput {
    fn from(e: EtpaInput) -> Self {
        match e {
            EtpaInput::Gold => EtpaClassifierInput::Gold,
            EtpaInput::Generated => EtpaClassifierInput::Generated,
        }
    }
}

/// Optimisation settings that, when present, apply to every trainer
/// (generators, processor, baselines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    /// A non-positive value disables clipping.
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory with `esnli_{train,dev,test}.csv`; the synthetic world is
    /// used when absent.
    pub esnli_dir: Option<PathBuf>,
    /// Also drop non-informative explanations from dev/test/ood.
    pub filter_eval_splits: bool,
    /// Instances (from the start of the test split) covered by annotations.
    pub n_eval: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            esnli_dir: None,
            filter_eval_splits: false,
            n_eval: 100,
        }
    }
}

/// Output layout; the directories are relative to `root`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub root: PathBuf,
    pub corpus_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            root: PathBuf::from("nile-out"),
            corpus_dir: PathBuf::from("corpus"),
            checkpoint_dir: PathBuf::from("checkpoints"),
            report_dir: PathBuf::from("reports"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| NileError::Config(format!("invalid config: {e}")))
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self)
            .map_err(|e| NileError::Config(format!("config does not serialize: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| NileError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Applies the training overrides and replaces every module seed with
    /// one derived from the global seed.
    pub fn resolve(&self) -> Result<Self> {
        let mut c = self.clone();
        let g = c.seed;
        c.world.seed = derive_seed(g, "world");
        c.generator.seed = derive_seed(g, "generator");
        c.processor.seed = derive_seed(g, "processor");
        c.baseline.classifier.seed = derive_seed(g, "baseline");
        let t = &c.training;
        for (epochs, sgd) in [
            (&mut c.generator.epochs, &mut c.generator.sgd),
            (&mut c.processor.epochs, &mut c.processor.sgd),
            (
                &mut c.baseline.classifier.epochs,
                &mut c.baseline.classifier.sgd,
            ),
        ] {
            if let Some(e) = t.epochs {
                *epochs = e;
            }
            if let Some(lr) = t.learning_rate {
                sgd.learning_rate = lr;
            }
            if let Some(clip) = t.clip_norm {
                sgd.clip_norm = (clip > 0.0).then_some(clip);
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.processor.validate()?;
        let lr = [
            self.generator.sgd.learning_rate,
            self.processor.sgd.learning_rate,
            self.baseline.classifier.sgd.learning_rate,
        ];
        if lr.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(NileError::Config(
                "learning rates must be positive and finite".into(),
            ));
        }
        if self.generator.d == 0 || self.generator.window == 0 || self.baseline.classifier.d == 0 {
            return Err(NileError::Config(
                "model dimensions must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Hash of the resolved config, excluding the output root so the same
    /// experiment hashes identically wherever it is written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.root = PathBuf::new();
        sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
    }

    /// `--out` beats the environment variable, which beats the config file.
    pub fn output_root(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        match std::env::var_os(OUT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.paths.root.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_is_lossless() {
        let mut c = ExperimentConfig::default();
        c.training.learning_rate = Some(0.05);
        c.data.esnli_dir = Some(PathBuf::from("data/esnli"));
        c.processor.negatives_per_instance = Some(3);
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ExperimentConfig::from_toml("seed = 3\n[processor]\nvariant = \"ns\"\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.world, WorldConfig::default());
        assert_eq!(c.processor.variant, nile::processor::Variant::Ns);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(ExperimentConfig::from_toml("sed = 3\n").is_err());
    }

    #[test]
    fn resolve_derives_seeds_and_applies_overrides() {
        let mut c = ExperimentConfig::default();
        c.training.epochs = Some(3);
        c.training.clip_norm = Some(0.0);
        let r = c.resolve().unwrap();
        assert_eq!(r.processor.seed, derive_seed(7, "processor"));
        assert_ne!(r.world.seed, r.processor.seed);
        assert_eq!((r.generator.epochs, r.processor.epochs), (3, 3));
        assert_eq!(r.baseline.classifier.sgd.clip_norm, None);
        assert_eq!(r.hash(), c.resolve().unwrap().hash());
        let mut other = c.clone();
        other.paths.root = PathBuf::from("elsewhere");
        assert_eq!(other.resolve().unwrap().hash(), r.hash());
        other.seed = 8;
        assert_ne!(other.resolve().unwrap().hash(), r.hash());
    }
}
