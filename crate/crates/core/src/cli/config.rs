use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data::DatasetSource;
use super::CliError;
use crate::bnn::ModelSpec;
use crate::expr::EncodingType;
use crate::fitness::FitnessConfig;
use crate::ga::GaConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FitnessMode {
    /// Train a binary network per genome.
    Train,
    /// Closed-form stand-in score; no training.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Synthetic,
    Cifar10Binary,
    Subset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    /// Conv stem, two binary conv blocks, dense head.
    TinyBinNet,
    /// Dense stem, two binary dense blocks, dense head.
    TinyBinMlp,
}

/// Every run setting in one flat JSON object. Unknown keys are rejected;
/// missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub encoding: EncodingType,
    pub population_size: usize,
    pub budget: u64,
    pub stagnation_limit: u64,
    pub mutation_probability: f64,
    pub fitness: FitnessMode,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub betas: [f64; 2],
    pub rejection_schedule: Vec<(u64, f64)>,
    pub model: ModelName,
    pub model_width: usize,
    pub dataset: DatasetKind,
    /// File for `cifar10-binary`, and for `subset` when set (otherwise the
    /// subset is drawn from synthetic data).
    pub dataset_path: Option<PathBuf>,
    pub dataset_samples: usize,
    pub dataset_classes: usize,
    pub dataset_noise: f64,
    pub subset_size: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ga = GaConfig::default();
        let fit = FitnessConfig::default();
        RunConfig {
            encoding: ga.encoding,
            population_size: ga.population_size,
            budget: ga.budget,
            stagnation_limit: ga.stagnation_limit,
            mutation_probability: ga.mutation_probability,
            fitness: FitnessMode::Train,
            epochs: fit.epochs,
            lr: fit.lr,
            batch_size: fit.batch_size,
            betas: fit.betas,
            rejection_schedule: fit.rejection_schedule,
            model: ModelName::TinyBinNet,
            model_width: 8,
            dataset: DatasetKind::Synthetic,
            dataset_path: None,
            dataset_samples: 1250,
            dataset_classes: 2,
            dataset_noise: 0.5,
            subset_size: 1000,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::InvalidConfig(vec![e.to_string()]))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn ga_config(&self) -> GaConfig {
        GaConfig {
            encoding: self.encoding,
            population_size: self.population_size,
            budget: self.budget,
            stagnation_limit: self.stagnation_limit,
            mutation_probability: self.mutation_probability,
            ..GaConfig::default()
        }
    }

    pub fn fitness_config(&self) -> FitnessConfig {
        FitnessConfig {
            epochs: self.epochs,
            rejection_schedule: self.rejection_schedule.clone(),
            lr: self.lr,
            batch_size: self.batch_size,
            betas: self.betas,
            seed: self.seed,
        }
    }

    pub fn dataset_source(&self) -> DatasetSource {
        let synthetic = DatasetSource::Synthetic {
            samples: self.dataset_samples,
            classes: self.dataset_classes,
            noise: self.dataset_noise,
            seed: self.seed,
        };
        match self.dataset {
            DatasetKind::Synthetic => synthetic,
            DatasetKind::Cifar10Binary => DatasetSource::Cifar10Binary {
                path: self.dataset_path.clone().unwrap_or_default(),
            },
            DatasetKind::Subset => DatasetSource::Subset {
                source: Box::new(match &self.dataset_path {
                    Some(p) => DatasetSource::Cifar10Binary { path: p.clone() },
                    None => synthetic,
                }),
                size: self.subset_size,
                seed: self.seed,
            },
        }
    }

    /// Model for samples of shape `sample_shape`.
    pub fn model_spec(&self, sample_shape: &[usize], classes: usize) -> ModelSpec {
        match (self.model, sample_shape) {
            (ModelName::TinyBinNet, &[c, h, w]) => ModelSpec::tiny_bin_net([c, h, w], classes, self.model_width),
            _ => ModelSpec::tiny_bin_mlp(sample_shape.iter().product(), classes, self.model_width),
        }
    }

    /// Offending fields with reasons; empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.ga_config().problems();
        out.extend(self.fitness_config().problems());
        if self.model_width == 0 {
            out.push("model_width: must be at least 1".into());
        }
        if self.dataset == DatasetKind::Synthetic || (self.dataset == DatasetKind::Subset && self.dataset_path.is_none()) {
            if !(2..=10).contains(&self.dataset_classes) {
                out.push(format!("dataset_classes: must lie in 2..=10, got {}", self.dataset_classes));
            }
            if self.dataset_samples < 10 {
                out.push(format!("dataset_samples: must be at least 10, got {}", self.dataset_samples));
            }
            if !(self.dataset_noise >= 0.0 && self.dataset_noise.is_finite()) {
                out.push(format!("dataset_noise: must be non-negative, got {}", self.dataset_noise));
            }
        }
        if self.dataset == DatasetKind::Cifar10Binary && self.dataset_path.is_none() {
            out.push("dataset_path: required for cifar10-binary".into());
        }
        if self.dataset == DatasetKind::Subset && self.subset_size < 10 {
            out.push(format!("subset_size: must be at least 10, got {}", self.subset_size));
        }
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(CliError::InvalidConfig(p))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.population_size, 30);
        assert_eq!(c.epochs, 15);
        assert_eq!(c.lr, 5e-3);
        assert_eq!(c.betas, [0.9, 0.999]);
        assert_eq!(c.batch_size, 128);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig {
            encoding: EncodingType::TypeII,
            dataset: DatasetKind::Cifar10Binary,
            dataset_path: Some("data.bin".into()),
            seed: 99,
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        let partial = RunConfig::from_json(r#"{"seed": 3, "encoding": "type2"}"#).unwrap();
        assert_eq!(partial.seed, 3);
        assert_eq!(partial.population_size, 30);
        assert!(RunConfig::from_json(r#"{"pop": 3}"#).is_err());
    }

    #[test]
    fn validation_names_fields() {
        let c = RunConfig {
            population_size: 1,
            epochs: 0,
            ..RunConfig::default()
        };
        let p = c.problems();
        assert!(p.iter().any(|m| m.starts_with("population_size")));
        assert!(p.iter().any(|m| m.starts_with("epochs")));
    }
}
