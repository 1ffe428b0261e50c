//! Dataset sources: seeded synthetic images, the cifar10 binary record
//! format, and stratified subsets.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::bnn::Dataset;
use crate::mix64;

pub const CIFAR_RECORD: usize = 3073;
pub const CIFAR_SHAPE: [usize; 3] = [3, 32, 32];

/// Where samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSource {
    Synthetic {
        samples: usize,
        classes: usize,
        noise: f64,
        seed: u64,
    },
    Cifar10Binary {
        path: PathBuf,
    },
    Subset {
        source: Box<DatasetSource>,
        size: usize,
        seed: u64,
    },
}

/// `classes` seeded templates of shape `shape` plus Gaussian pixel noise.
/// Labels cycle through the classes so every class is equally represented.
pub fn synthetic(
    shape: &[usize],
    samples: usize,
    classes: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset, CliError> {
    if !(2..=10).contains(&classes) {
        return Err(CliError::InvalidConfig(vec![format!(
            "dataset_classes: must lie in 2..=10, got {classes}"
        )]));
    }
    let normal = Normal::new(0.0, noise).map_err(|e| CliError::InvalidConfig(vec![format!("dataset_noise: {e}")]))?;
    let per: usize = shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed));
    let templates: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..per).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut images = Vec::with_capacity(samples * per);
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let c = i % classes;
        labels.push(c as u8);
        images.extend(templates[c].iter().map(|&t| (t + normal.sample(&mut rng)) as f32));
    }
    Ok(Dataset::new(shape.to_vec(), classes, images, labels)?)
}

/// Parses 3,073-byte records: a label byte then 3×32×32 channel-planar
/// pixels, mapped to `[-1, 1]` as `p / 127.5 − 1`.
pub fn parse_cifar10(bytes: &[u8], path: &Path) -> Result<Dataset, CliError> {
    let format = |offset: usize, reason: String| CliError::Format {
        path: path.to_path_buf(),
        offset,
        reason,
    };
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD) {
        let offset = bytes.len() / CIFAR_RECORD * CIFAR_RECORD;
        return Err(format(
            offset,
            format!("{} bytes is not a whole number of {CIFAR_RECORD}-byte records", bytes.len()),
        ));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut images = Vec::with_capacity(n * (CIFAR_RECORD - 1));
    let mut labels = Vec::with_capacity(n);
    for (r, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if rec[0] > 9 {
            return Err(format(r * CIFAR_RECORD, format!("label {} exceeds 9", rec[0])));
        }
        labels.push(rec[0]);
        images.extend(rec[1..].iter().map(|&p| p as f32 / 127.5 - 1.0));
    }
    Ok(Dataset::new(CIFAR_SHAPE.to_vec(), 10, images, labels)?)
}

pub fn read_cifar10(path: &Path) -> Result<Dataset, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_cifar10(&bytes, path)
}

/// Inverse of [`parse_cifar10`] for `[3, 32, 32]` data in `[-1, 1]`.
pub fn encode_cifar10(data: &Dataset) -> Result<Vec<u8>, CliError> {
    if data.sample_shape != CIFAR_SHAPE || data.classes > 10 {
        return Err(CliError::InvalidConfig(vec![format!(
            "cifar10 records need [3, 32, 32] samples and at most 10 classes, got {:?} / {}",
            data.sample_shape, data.classes
        )]));
    }
    let mut out = Vec::with_capacity(data.len() * CIFAR_RECORD);
    for i in 0..data.len() {
        out.push(data.labels[i]);
        out.extend(
            data.sample(i)
                .iter()
                .map(|&v| ((v as f64 + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8),
        );
    }
    Ok(out)
}

fn rank_key(seed: u64, i: usize) -> u64 {
    mix64(seed ^ mix64(i as u64))
}

/// Deterministic 80/20 split: the `⌊n/5⌋` indices with the smallest hash
/// go to validation. Both parts keep the original sample order.
pub fn split_train_validation(data: &Dataset, seed: u64) -> (Dataset, Dataset) {
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (rank_key(seed, i), i));
    let mut is_val = vec![false; n];
    for &i in &order[..n / 5] {
        is_val[i] = true;
    }
    let train: Vec<usize> = (0..n).filter(|&i| !is_val[i]).collect();
    let val: Vec<usize> = (0..n).filter(|&i| is_val[i]).collect();
    (data.subset(&train), data.subset(&val))
}

/// Stratified subsample of `size` samples: classes take turns contributing
/// their next hash-ranked sample.
pub fn stratified_subset(data: &Dataset, size: usize, seed: u64) -> Dataset {
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); data.classes];
    for i in 0..data.len() {
        per_class[data.labels[i] as usize].push(i);
    }
    for list in per_class.iter_mut() {
        list.sort_by_key(|&i| (rank_key(seed, i), i));
        list.reverse();
    }
    let mut picked = Vec::with_capacity(size.min(data.len()));
    while picked.len() < size.min(data.len()) {
        for list in per_class.iter_mut() {
            if picked.len() == size {
                break;
            }
            if let Some(i) = list.pop() {
                picked.push(i);
            }
        }
    }
    picked.sort_unstable();
    data.subset(&picked)
}

/// Synthetic samples are `1×8×8`.
pub const SYNTHETIC_SHAPE: [usize; 3] = [1, 8, 8];

pub fn load_dataset(source: &DatasetSource) -> Result<Dataset, CliError> {
    match source {
        DatasetSource::Synthetic {
            samples,
            classes,
            noise,
            seed,
        } => synthetic(&SYNTHETIC_SHAPE, *samples, *classes, *noise, *seed),
        DatasetSource::Cifar10Binary { path } => read_cifar10(path),
        DatasetSource::Subset { source, size, seed } => Ok(stratified_subset(&load_dataset(source)?, *size, *seed)),
    }
}
