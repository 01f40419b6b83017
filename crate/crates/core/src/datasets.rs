//! Data ingestion and preparation: IDX files, synthetic two-Gaussian data,
//! standardization and client sharding.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Binary-classification data: `N` rows of dimension `D`, labels in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from row-major features. Rejects empty data, ragged
    /// rows, labels other than ±1 and non-finite entries.
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<f64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * labels.len(),
                got: features.len(),
            });
        }
        if let Some(y) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::invalid(format!("label {y} is not ±1")));
        }
        if !linalg::all_finite(&features) {
            return Err(Error::invalid("non-finite feature entry"));
        }
        Ok(Self {
            features,
            dim,
            labels,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        Self::new(rows.concat(), dim, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.features
            .chunks_exact(self.dim)
            .zip(self.labels.iter().copied())
    }

    /// Rows at `indices`, in that order. Duplicates are allowed.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            features,
            dim: self.dim,
            labels,
        }
    }

    /// Contiguous block of rows `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            features: self.features[start * self.dim..end * self.dim].to_vec(),
            dim: self.dim,
            labels: self.labels[start..end].to_vec(),
        }
    }

    /// Applies a row map producing rows of dimension `out_dim`.
    pub fn map_rows<F>(&self, out_dim: usize, mut f: F) -> Self
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let mut features = vec![0.0; self.len() * out_dim];
        for (src, dst) in self
            .features
            .chunks_exact(self.dim)
            .zip(features.chunks_exact_mut(out_dim))
        {
            f(src, dst);
        }
        Self {
            features,
            dim: out_dim,
            labels: self.labels.clone(),
        }
    }

    pub fn max_row_norm(&self) -> f64 {
        self.features
            .chunks_exact(self.dim)
            .map(linalg::norm)
            .fold(0.0, f64::max)
    }
}

/// Raw IDX content: images flattened row-major with pixel values in [0, 255],
/// digit labels 0-9.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImages {
    pub pixels: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<u8>,
}

impl LabeledImages {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let slice = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            expected: offset + 4,
            found: bytes.len(),
        })?;
    Ok(u32::from_be_bytes([slice[0], slice[1], slice[2], slice[3]]))
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Parses an IDX image file (`0x00000803`, count, rows, cols, bytes).
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    check_magic(bytes, IDX_IMAGES_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let dim = rows * cols;
    let expected = 16 + count * dim;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    let pixels = bytes[16..expected].iter().map(|&b| f64::from(b)).collect();
    Ok((pixels, count, dim))
}

/// Parses an IDX label file (`0x00000801`, count, bytes).
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC, path)?;
    let count = be_u32(bytes, 4, path)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..expected].to_vec())
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledImages> {
    let (pixels, count, dim) = parse_idx_images(&read_file(images_path)?, images_path)?;
    let labels = parse_idx_labels(&read_file(labels_path)?, labels_path)?;
    if labels.len() != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    Ok(LabeledImages {
        pixels,
        dim,
        labels,
    })
}

/// Keeps rows labelled `pos_digit` (→ +1) or `neg_digit` (→ −1), preserving order
/// and the exact pixel values.
pub fn filter_binary(data: &LabeledImages, pos_digit: u8, neg_digit: u8) -> Result<Dataset> {
    if pos_digit == neg_digit || pos_digit > 9 || neg_digit > 9 {
        return Err(Error::invalid(format!(
            "digit pair ({pos_digit}, {neg_digit}) must be two distinct digits in 0-9"
        )));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut has_pos = false;
    let mut has_neg = false;
    for (i, &l) in data.labels.iter().enumerate() {
        let y = if l == pos_digit {
            has_pos = true;
            1.0
        } else if l == neg_digit {
            has_neg = true;
            -1.0
        } else {
            continue;
        };
        features.extend_from_slice(&data.pixels[i * data.dim..(i + 1) * data.dim]);
        labels.push(y);
    }
    if !(has_pos && has_neg) {
        return Err(Error::EmptyClassPair {
            pos: pos_digit,
            neg: neg_digit,
        });
    }
    Dataset::new(features, data.dim, labels)
}

/// Per-coordinate mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits standardization statistics. Variance divides by `N`; coordinates with
/// zero variance get `std = 1`.
pub fn standardize_fit(data: &Dataset) -> Result<StandardizeStats> {
    if data.len() < 2 {
        return Err(Error::invalid("standardize_fit needs at least 2 rows"));
    }
    let d = data.dim();
    let n = data.len() as f64;
    let mut mean = vec![0.0; d];
    for (row, _) in data.rows() {
        linalg::axpy(1.0, row, &mut mean);
    }
    linalg::scale(1.0 / n, &mut mean);
    let mut var = vec![0.0; d];
    for (row, _) in data.rows() {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var
        .into_iter()
        .zip(&mean)
        .map(|(v, m)| {
            let s = (v / n).sqrt();
            // rounding in the mean leaves a tiny spread on constant columns
            if s > 1e-12 * (1.0 + m.abs()) {
                s
            } else {
                1.0
            }
        })
        .collect();
    Ok(StandardizeStats { mean, std })
}

pub fn standardize_apply(data: &Dataset, stats: &StandardizeStats) -> Result<Dataset> {
    if stats.mean.len() != data.dim() || stats.std.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: stats.mean.len(),
        });
    }
    Ok(data.map_rows(data.dim(), |src, dst| {
        for (j, o) in dst.iter_mut().enumerate() {
            *o = (src[j] - stats.mean[j]) / stats.std[j];
        }
    }))
}

/// Parameters of the synthetic two-cluster task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub dim: usize,
    pub separation: f64,
    pub label_noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            dim: 10,
            separation: 4.0,
            label_noise: 0.0,
        }
    }
}

/// Two unit-variance spherical Gaussians centred at `±(separation/2)·e₁`; the
/// class is a fair coin and each label is flipped with probability `label_noise`.
pub fn synth_two_gaussians(
    dim: usize,
    n_total: usize,
    separation: f64,
    label_noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if dim == 0 || n_total < 2 {
        return Err(Error::invalid(
            "synth_two_gaussians needs dim ≥ 1, n_total ≥ 2",
        ));
    }
    if !(separation >= 0.0) || !(0.0..0.5).contains(&label_noise) {
        return Err(Error::invalid(
            "synth_two_gaussians needs separation ≥ 0 and label_noise in [0, 0.5)",
        ));
    }
    let mut r = rng::stream(seed);
    let mut features = vec![0.0; dim * n_total];
    let mut labels = Vec::with_capacity(n_total);
    for row in features.chunks_exact_mut(dim) {
        let y = if rng::unit_uniform(&mut r) < 0.5 {
            1.0
        } else {
            -1.0
        };
        rng::fill_standard_normal(&mut r, row);
        row[0] += y * separation / 2.0;
        let flip = rng::unit_uniform(&mut r) < label_noise;
        labels.push(if flip { -y } else { y });
    }
    Dataset::new(features, dim, labels)
}

/// Rescales every row with norm above `bound` onto the sphere of radius `bound`.
pub fn clip_norms(data: &Dataset, bound: f64) -> Dataset {
    data.map_rows(data.dim(), |src, dst| {
        let nrm = linalg::norm(src);
        let s = if nrm > bound { bound / nrm } else { 1.0 };
        for (o, x) in dst.iter_mut().zip(src) {
            *o = x * s;
        }
    })
}

/// How client shards are drawn from the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplacementMode {
    /// Without replacement inside a client, independently across clients.
    PerClientWithoutReplacement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardPlan {
    pub clients: usize,
    pub per_client: usize,
    pub seed: u64,
    pub mode: ReplacementMode,
}

impl ShardPlan {
    pub fn new(clients: usize, per_client: usize, seed: u64) -> Self {
        Self {
            clients,
            per_client,
            seed,
            mode: ReplacementMode::PerClientWithoutReplacement,
        }
    }
}

/// Index sets of each client's shard; client `i` uses stream `child_seed(seed, "shard", i)`.
pub fn shard_indices(pool_len: usize, plan: &ShardPlan) -> Result<Vec<Vec<usize>>> {
    if plan.clients == 0 || plan.per_client == 0 {
        return Err(Error::invalid("shard plan needs K ≥ 1 and n ≥ 1"));
    }
    if plan.per_client > pool_len {
        return Err(Error::invalid(format!(
            "shard size {} exceeds pool size {pool_len}",
            plan.per_client
        )));
    }
    Ok((0..plan.clients)
        .map(|i| {
            let mut r = rng::stream(rng::child_seed(plan.seed, "shard", i as u64));
            let mut idx: Vec<usize> = (0..pool_len).collect();
            let (chosen, _) = idx.partial_shuffle(&mut r, plan.per_client);
            chosen.to_vec()
        })
        .collect())
}

pub fn shard(pool: &Dataset, plan: &ShardPlan) -> Result<Vec<Dataset>> {
    Ok(shard_indices(pool.len(), plan)?
        .iter()
        .map(|idx| pool.select(idx))
        .collect())
}

/// Uniform sample of `n` distinct rows.
pub fn subsample(pool: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    let plan = ShardPlan::new(1, n, seed);
    Ok(pool.select(&shard_indices(pool.len(), &plan)?[0]))
}
