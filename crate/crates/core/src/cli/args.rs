use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::{DatasetKind, FitnessMode, ModelName, RunConfig};
use crate::expr::EncodingType;

#[derive(Debug, Parser)]
#[command(name = "afsearch", version, about = "Genetic search for activation functions in binary networks")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for population initialization.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the genetic search and write a report.
    Search(RunOverrides),
    /// Score every Type-I genome and write a ranked CSV.
    Enumerate(RunOverrides),
    /// Train once with a genome, catalog entry, or `baseline`.
    Eval {
        /// `t1:U11-U12-B1`, `AF1`..`AF15`, `RSign`, `RPReLU`, or `baseline`.
        target: String,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Fuse `sign(AF(x))` into thresholds and verify the result.
    Fuse {
        target: String,
    },
    /// Write synthetic data in the cifar10 binary record format.
    GenData {
        #[arg(long, default_value_t = 1250)]
        samples: usize,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunOverrides {
    #[arg(long, value_parser = parse_encoding)]
    pub encoding: Option<EncodingType>,
    #[arg(long)]
    pub population_size: Option<usize>,
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long)]
    pub stagnation_limit: Option<u64>,
    #[arg(long)]
    pub mutation_probability: Option<f64>,
    #[arg(long, value_enum)]
    pub fitness: Option<FitnessMode>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub model: Option<ModelName>,
    #[arg(long)]
    pub model_width: Option<usize>,
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
    #[arg(long)]
    pub dataset_path: Option<PathBuf>,
    #[arg(long)]
    pub dataset_samples: Option<usize>,
    #[arg(long)]
    pub dataset_classes: Option<usize>,
    #[arg(long)]
    pub subset_size: Option<usize>,
}

fn parse_encoding(s: &str) -> Result<EncodingType, String> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "i" | "type1" | "type-i" => Ok(EncodingType::TypeI),
        "2" | "ii" | "type2" | "type-ii" => Ok(EncodingType::TypeII),
        _ => Err(format!("unknown encoding `{s}`; expected type1 or type2")),
    }
}

macro_rules! apply {
    ($src:expr, $dst:expr, $($field:ident),*) => {
        $(if let Some(v) = $src.$field.clone() { $dst.$field = v; })*
    };
}

impl RunOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        apply!(
            self, cfg, encoding, population_size, budget, stagnation_limit, mutation_probability, fitness,
            epochs, lr, batch_size, model, model_width, dataset, dataset_samples, dataset_classes, subset_size
        );
        if let Some(p) = &self.dataset_path {
            cfg.dataset_path = Some(p.clone());
        }
    }
}
