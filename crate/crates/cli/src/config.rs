//! JSON configuration records for every subcommand. Unknown keys are rejected.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use distgen_core::bounds::{BoundKind, OptimizeGrid};
use distgen_core::compression::{BoundedDataModel, CompressionParams, Lemma3Options};
use distgen_core::datasets::SynthSpec;
use distgen_core::distributed::{FinalChoice, SweepConfig};
use distgen_core::ratedistortion::{
    AlgorithmRdInstance, BaOptions, ConditionalRdInstance, RdInstance, RobustInstance,
    RobustOptions,
};

use crate::error::{CliError, Result};

/// Byte offset of a 1-based `(line, column)` position in `text`.
pub fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(text.len());
        }
        offset += l.len();
    }
    text.len()
}

/// Parses `text` as a `T`, reporting failures with their byte offset.
pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CliError::ConfigParse {
        path: path.to_path_buf(),
        message: strip_position(&e.to_string()),
        offset: byte_offset(text, e.line(), e.column()),
        line: e.line(),
        column: e.column(),
    })
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// Reads a config file, or returns the defaults when no path is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_json(&text, p)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    #[default]
    Mnist,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Digit labelled `+1`.
    pub pos_digit: u8,
    /// Digit labelled `−1`.
    pub neg_digit: u8,
    pub synthetic: SynthSpec,
    /// Synthetic pool size (MNIST uses the full training split).
    pub pool_size: usize,
    /// Synthetic test size (MNIST uses the full test split).
    pub test_size: usize,
    pub standardize: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Mnist,
            pos_digit: 1,
            neg_digit: 6,
            synthetic: SynthSpec::default(),
            pool_size: 20_000,
            test_size: 5_000,
            standardize: true,
        }
    }
}

/// Random Fourier feature settings. The feature seed is derived from the
/// master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Kernel width; `null` picks 0.01 for MNIST and 0.05 for the synthetic task.
    pub gamma: Option<f64>,
    pub features: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            gamma: None,
            features: 2000,
        }
    }
}

impl FeatureConfig {
    pub fn gamma_for(&self, source: DataSource) -> f64 {
        self.gamma.unwrap_or(match source {
            DataSource::Mnist => 0.01,
            DataSource::Synthetic => 0.05,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DsvmSweepConfig {
    pub data: DataConfig,
    pub features: FeatureConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub data: DataConfig,
    pub features: FeatureConfig,
    pub sweep: SweepConfig,
    /// Clients used by the `K → ∞` limit estimate.
    pub limit_replicas: usize,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            features: FeatureConfig::default(),
            sweep: SweepConfig {
                k_values: vec![1, 5, 10, 25, 50, 100, 200],
                repeats: 5,
                ..SweepConfig::default()
            },
            limit_replicas: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsgldCommandConfig {
    pub data: DataConfig,
    /// `null` trains on the standardized inputs directly.
    pub features: Option<FeatureConfig>,
    pub k_values: Vec<usize>,
    pub n: usize,
    pub batch: usize,
    pub rounds: usize,
    pub eta: f64,
    pub beta: f64,
    pub init_std: f64,
    pub final_choice: FinalChoice,
    pub replicas: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for FsgldCommandConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            features: None,
            k_values: vec![1, 4, 16],
            n: 50,
            batch: 5,
            rounds: 200,
            eta: 0.1,
            beta: 100.0,
            init_std: 0.01,
            final_choice: FinalChoice::Polyak,
            replicas: 20,
            sigma: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JlValidateConfig {
    /// `null` uses the default parameters at `(n=100, K=10, θ=0.2, B=1)` and the
    /// `(m=100, c₁=1.3)` variant.
    pub grid: Option<Vec<CompressionParams>>,
    pub model: BoundedDataModel,
    pub options: Lemma3Options,
}

pub fn default_jl_grid(seed: u64) -> Vec<CompressionParams> {
    let base = CompressionParams::refit(100, 10, 0.2, 1.0, seed);
    let small = CompressionParams {
        m: 100,
        c1: 1.3,
        ..base
    };
    vec![base, small]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub n: usize,
    pub k: usize,
    pub theta: f64,
    pub b: f64,
    pub delta: f64,
    pub sigma: f64,
    pub m: Option<usize>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub nu: Option<f64>,
    /// Report the tight variant of ε alongside the default one.
    pub tight: bool,
    /// Minimize this bound over `(m, c₁, c₂, ν)` as well.
    pub optimize: Option<BoundKind>,
    pub optimize_grid: OptimizeGrid,
    /// Evaluate the defaults along these `K` values.
    pub k_curve: Vec<usize>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            n: 100,
            k: 10,
            theta: 0.2,
            b: 1.0,
            delta: 0.05,
            sigma: 1.0,
            m: None,
            c1: None,
            c2: None,
            nu: None,
            tight: false,
            optimize: None,
            optimize_grid: OptimizeGrid::default(),
            k_curve: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RdProblem {
    Classical {
        instance: RdInstance,
    },
    Algorithm {
        instance: AlgorithmRdInstance,
    },
    Conditional {
        instance: ConditionalRdInstance,
    },
    Robust {
        instance: RobustInstance,
        delta: f64,
        #[serde(default)]
        options: RobustOptions,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdSolveConfig {
    pub problem: RdProblem,
    #[serde(default)]
    pub options: BaOptions,
}
