//! Random feature maps: random Fourier features for the Gaussian kernel and
//! Gaussian Johnson-Lindenstrauss projections.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

/// Serializable description of a feature map; the matrices are regenerated from the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RffSpec {
    pub gamma: f64,
    pub features: usize,
    pub seed: u64,
}

impl Default for RffSpec {
    fn default() -> Self {
        Self {
            gamma: 0.01,
            features: 2000,
            seed: 0,
        }
    }
}

/// `φ(x)_j = sqrt(2/p)·cos(⟨ω_j, x⟩ + b_j)` with `ω_j ~ N(0, 2γ I)` and
/// `b_j ~ U[0, 2π)`, so that `⟨φ(x), φ(x′)⟩ ≈ exp(−γ‖x − x′‖²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RffMap {
    frequencies: Vec<f64>,
    phases: Vec<f64>,
    input_dim: usize,
    spec: RffSpec,
}

impl RffMap {
    pub fn sample(input_dim: usize, spec: RffSpec) -> Result<Self> {
        if input_dim == 0 || spec.features == 0 || !(spec.gamma > 0.0) {
            return Err(Error::invalid("RFF map needs D ≥ 1, p ≥ 1 and γ > 0"));
        }
        let mut r = rng::stream(spec.seed);
        let mut frequencies = vec![0.0; spec.features * input_dim];
        rng::fill_standard_normal(&mut r, &mut frequencies);
        linalg::scale((2.0 * spec.gamma).sqrt(), &mut frequencies);
        let phases = (0..spec.features)
            .map(|_| 2.0 * PI * rng::unit_uniform(&mut r))
            .collect();
        Ok(Self {
            frequencies,
            phases,
            input_dim,
            spec,
        })
    }

    /// Map with explicitly given frequencies (`p × D`, row-major) and phases.
    pub fn from_parts(
        frequencies: Vec<f64>,
        phases: Vec<f64>,
        input_dim: usize,
        gamma: f64,
    ) -> Result<Self> {
        if frequencies.len() != phases.len() * input_dim {
            return Err(Error::DimensionMismatch {
                expected: phases.len() * input_dim,
                got: frequencies.len(),
            });
        }
        let features = phases.len();
        Ok(Self {
            frequencies,
            phases,
            input_dim,
            spec: RffSpec {
                gamma,
                features,
                seed: 0,
            },
        })
    }

    pub fn spec(&self) -> RffSpec {
        self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.phases.len()
    }

    pub fn transform_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let scale = (2.0 / self.output_dim() as f64).sqrt();
        for ((o, omega), b) in out
            .iter_mut()
            .zip(self.frequencies.chunks_exact(self.input_dim))
            .zip(&self.phases)
        {
            *o = scale * (linalg::dot(omega, x) + b).cos();
        }
        Ok(())
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output_dim()];
        self.transform_into(x, &mut out)?;
        Ok(out)
    }

    pub fn transform_dataset(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: data.dim(),
            });
        }
        Ok(data.map_rows(self.output_dim(), |src, dst| {
            // dimension checked above
            let _ = self.transform_into(src, dst);
        }))
    }
}

/// Exact Gaussian kernel `exp(−γ‖x − x′‖²)`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// Gaussian JL matrix with i.i.d. `N(0, 1/m)` entries. Stored as `m` rows of
/// length `D` so that [`JlMatrix::project`] returns the `m`-vector `𝖠x`.
#[derive(Debug, Clone, PartialEq)]
pub struct JlMatrix {
    rows: Vec<f64>,
    input_dim: usize,
    m: usize,
    seed: u64,
}

impl JlMatrix {
    pub fn sample(input_dim: usize, m: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || m == 0 {
            return Err(Error::invalid("JL matrix needs D ≥ 1 and m ≥ 1"));
        }
        let mut r = rng::stream(seed);
        let mut rows = vec![0.0; m * input_dim];
        rng::fill_standard_normal(&mut r, &mut rows);
        linalg::scale(1.0 / (m as f64).sqrt(), &mut rows);
        Ok(Self {
            rows,
            input_dim,
            m,
            seed,
        })
    }

    /// The `m × D` identity-like map (`m = D`, `𝖠 = I`).
    pub fn identity(dim: usize) -> Self {
        let mut rows = vec![0.0; dim * dim];
        for i in 0..dim {
            rows[i * dim + i] = 1.0;
        }
        Self {
            rows,
            input_dim: dim,
            m: dim,
            seed: 0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entries(&self) -> &[f64] {
        &self.rows
    }

    pub fn project_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        for (o, row) in out.iter_mut().zip(self.rows.chunks_exact(self.input_dim)) {
            *o = linalg::dot(row, x);
        }
        Ok(())
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.m];
        self.project_into(x, &mut out)?;
        Ok(out)
    }
}

/// Norm tail `2·exp(−0.21·m·(c² − 1))` as used in the DSVM ε terms.
///
/// For Gaussian `𝖠` the exact tail is `P(χ²_m ≥ m·c²)`, which this
/// expression underestimates; [`jl_norm_tail_squared`] is the valid form.
pub fn jl_norm_tail(m: usize, c: f64) -> f64 {
    2.0 * (-0.21 * m as f64 * (c * c - 1.0)).exp()
}

/// `2·exp(−0.21·m·(c² − 1)²)`, bounding `P(‖𝖠x‖ ≥ c‖x‖)` for Gaussian `𝖠`
/// when `1 < c² ≤ 2`.
pub fn jl_norm_tail_squared(m: usize, c: f64) -> f64 {
    let e = c * c - 1.0;
    2.0 * (-0.21 * m as f64 * e * e).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_points(dim: usize, count: usize, seed: u64, scale: f64) -> Vec<Vec<f64>> {
        let mut r = rng::stream(seed);
        (0..count)
            .map(|_| {
                let mut v = vec![0.0; dim];
                rng::fill_standard_normal(&mut r, &mut v);
                linalg::scale(scale, &mut v);
                v
            })
            .collect()
    }

    #[test]
    fn single_zero_frequency_feature_is_sqrt2() {
        let map = RffMap::from_parts(vec![0.0, 0.0], vec![0.0], 2, 1.0).unwrap();
        for x in random_points(2, 5, 1, 3.0) {
            assert!((map.transform(&x).unwrap()[0] - 2f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn rff_dimension_mismatch() {
        let map = RffMap::sample(
            3,
            RffSpec {
                gamma: 0.5,
                features: 4,
                seed: 1,
            },
        )
        .unwrap();
        assert!(matches!(
            map.transform(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rff_is_seed_deterministic_and_bounded() {
        let spec = RffSpec {
            gamma: 0.3,
            features: 64,
            seed: 5,
        };
        let a = RffMap::sample(4, spec).unwrap();
        assert_eq!(a, RffMap::sample(4, spec).unwrap());
        let bound = (2.0f64 / 64.0).sqrt();
        for x in random_points(4, 20, 2, 10.0) {
            assert!(a.transform(&x).unwrap().iter().all(|v| v.abs() <= bound));
        }
    }

    fn kernel_rms_error(p: usize) -> f64 {
        let gamma = 0.1;
        let map = RffMap::sample(
            5,
            RffSpec {
                gamma,
                features: p,
                seed: 77,
            },
        )
        .unwrap();
        let xs = random_points(5, 100, 3, 1.0);
        let ys = random_points(5, 100, 4, 1.0);
        let sq: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                let approx = linalg::dot(&map.transform(x).unwrap(), &map.transform(y).unwrap());
                (approx - gaussian_kernel(x, y, gamma)).powi(2)
            })
            .sum();
        (sq / 100.0).sqrt()
    }

    #[test]
    fn kernel_error_shrinks_with_p() {
        assert!(kernel_rms_error(4000) < kernel_rms_error(250));
    }

    #[test]
    fn jl_entry_variance_is_one_over_m() {
        let a = JlMatrix::sample(1000, 50, 8).unwrap();
        let e = a.entries();
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / e.len() as f64;
        assert!(mean.abs() < 0.002);
        assert!((var - 0.02).abs() < 0.05 * 0.02, "variance {var}");
        assert_eq!(a, JlMatrix::sample(1000, 50, 8).unwrap());
    }

    #[test]
    fn jl_zero_maps_to_zero() {
        let a = JlMatrix::sample(7, 3, 1).unwrap();
        assert_eq!(a.project(&[0.0; 7]).unwrap(), vec![0.0; 3]);
        assert!(a.project(&[0.0; 6]).is_err());
    }

    #[test]
    fn jl_preserves_squared_norm_in_mean() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let target = linalg::dot(&x, &x);
        let avg = (0..200)
            .map(|s| {
                let p = JlMatrix::sample(40, 30, 1000 + s)
                    .unwrap()
                    .project(&x)
                    .unwrap();
                linalg::dot(&p, &p)
            })
            .sum::<f64>()
            / 200.0;
        assert!((avg / target - 1.0).abs() < 0.05, "ratio {}", avg / target);
    }

    #[test]
    fn jl_single_row_is_half_normal() {
        // m = 1: 𝖠x ~ N(0, ‖x‖²), so E|𝖠x| = ‖x‖·sqrt(2/π)
        let x = [3.0, 4.0];
        let draws = 20000;
        let mean_abs = (0..draws)
            .map(|s| JlMatrix::sample(2, 1, s).unwrap().project(&x).unwrap()[0].abs())
            .sum::<f64>()
            / draws as f64;
        let expect = 5.0 * (2.0 / PI).sqrt();
        assert!((mean_abs - expect).abs() < 0.05 * expect);
    }

    #[test]
    fn jl_tail_frequency_matches_chi_square() {
        // ‖𝖠x‖²/‖x‖² ~ χ²_m/m; P(χ²_100 ≥ 144) = 2.6292509e-3 (regularized upper gamma)
        let x: Vec<f64> = (0..60).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
        let nx = linalg::norm(&x);
        let c = 1.2;
        let trials = 20_000;
        let hits = (0..trials)
            .filter(|&s| {
                let p = JlMatrix::sample(60, 100, 50_000 + s)
                    .unwrap()
                    .project(&x)
                    .unwrap();
                linalg::norm(&p) >= c * nx
            })
            .count() as f64;
        let freq = hits / trials as f64;
        let exact = 2.629_250_917_451_3e-3;
        let se = (exact * (1.0 - exact) / trials as f64).sqrt();
        assert!((freq - exact).abs() < 4.0 * se, "frequency {freq}");
        assert!(freq <= jl_norm_tail_squared(100, c));
        // the unsquared form is not a valid bound on the sphere ‖x‖ = B
        assert!(jl_norm_tail(100, c) < exact);
    }
}
