//! Loading, standardizing and featurizing the experiment data.

use std::path::PathBuf;

use distgen_core::datasets::{
    filter_binary, load_idx, standardize_apply, standardize_fit, synth_two_gaussians, Dataset,
};
use distgen_core::features::{RffMap, RffSpec};
use distgen_core::rng::child_seed;

use crate::config::{DataConfig, DataSource, FeatureConfig};
use crate::error::{CliError, Result};

pub const DATA_DIR_ENV: &str = "DISTGEN_DATA_DIR";

const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Training pool and held-out test set.
#[derive(Debug, Clone)]
pub struct Split {
    pub pool: Dataset,
    pub test: Dataset,
}

fn mnist_dir() -> Result<PathBuf> {
    let dir = std::env::var_os(DATA_DIR_ENV).ok_or_else(|| CliError::MissingData {
        message: format!(
            "MNIST requested but {DATA_DIR_ENV} is not set; point it at a directory holding {} \
             or pass --synthetic",
            MNIST_FILES.join(", ")
        ),
    })?;
    let dir = PathBuf::from(dir);
    for f in MNIST_FILES {
        if !dir.join(f).is_file() {
            return Err(CliError::MissingData {
                message: format!(
                    "missing MNIST file {} (from {DATA_DIR_ENV}); pass --synthetic to use the synthetic task",
                    dir.join(f).display()
                ),
            });
        }
    }
    Ok(dir)
}

/// Loads the raw split described by `cfg`, standardized with pool statistics.
pub fn load_split(cfg: &DataConfig, seed: u64) -> Result<Split> {
    let (pool, test) = match cfg.source {
        DataSource::Mnist => {
            let dir = mnist_dir()?;
            let train = load_idx(&dir.join(MNIST_FILES[0]), &dir.join(MNIST_FILES[1]))?;
            let t10k = load_idx(&dir.join(MNIST_FILES[2]), &dir.join(MNIST_FILES[3]))?;
            (
                filter_binary(&train, cfg.pos_digit, cfg.neg_digit)?,
                filter_binary(&t10k, cfg.pos_digit, cfg.neg_digit)?,
            )
        }
        DataSource::Synthetic => {
            let s = cfg.synthetic;
            (
                synth_two_gaussians(
                    s.dim,
                    cfg.pool_size,
                    s.separation,
                    s.label_noise,
                    child_seed(seed, "pool", 0),
                )?,
                synth_two_gaussians(
                    s.dim,
                    cfg.test_size,
                    s.separation,
                    s.label_noise,
                    child_seed(seed, "test", 0),
                )?,
            )
        }
    };
    if !cfg.standardize {
        return Ok(Split { pool, test });
    }
    let stats = standardize_fit(&pool)?;
    Ok(Split {
        pool: standardize_apply(&pool, &stats)?,
        test: standardize_apply(&test, &stats)?,
    })
}

/// Applies one random Fourier feature map to both halves of the split.
pub fn featurize(
    split: &Split,
    features: &FeatureConfig,
    source: DataSource,
    seed: u64,
) -> Result<Split> {
    let spec = RffSpec {
        gamma: features.gamma_for(source),
        features: features.features,
        seed: child_seed(seed, "rff", 0),
    };
    let map = RffMap::sample(split.pool.dim(), spec)?;
    Ok(Split {
        pool: map.transform_dataset(&split.pool)?,
        test: map.transform_dataset(&split.test)?,
    })
}
