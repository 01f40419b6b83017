//! Finite-alphabet rate-distortion solvers.
//!
//! [`blahut_arimoto`] computes points of the classical `R(D)` curve for a given
//! Lagrange slope; [`rd_at_distortion`] finds the slope hitting a distortion
//! target. The learning-theoretic versions reduce to these: the algorithm
//! rate-distortion function uses `ρ(s, ŵ) = −gen(s, ŵ)` as distortion, and the
//! conditional version shares one slope across all conditioning values. All
//! rates are in nats and every solver is deterministic.

mod algorithm;
mod blahut;
mod robust;
mod toy;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use algorithm::{
    algorithm_rd, conditional_algorithm_rd, AlgorithmRdInstance, ConditionalRdInstance,
};
pub use blahut::{blahut_arimoto, rd_at_distortion, BaOptions, BaPoint};
pub use robust::{
    robust_rd, RobustAtom, RobustInstance, RobustOptions, RobustResult, ROBUST_ATOM_CAP,
};
pub use toy::{majority_toy, theorem4_bounds, FiniteToy, Theorem4Bounds};

/// Probability vector on a finite alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FinitePmf {
    probs: Vec<f64>,
}

impl FinitePmf {
    /// Accepts a probability vector summing to 1 within `1e-9`; the stored
    /// vector is renormalized exactly.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty pmf"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("pmf entries must be finite and nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("pmf sums to {total}, not 1")));
        }
        Ok(Self {
            probs: probs.into_iter().map(|p| p / total).collect(),
        })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid(
                "weights must be nonnegative with positive sum",
            ));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

impl TryFrom<Vec<f64>> for FinitePmf {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FinitePmf> for Vec<f64> {
    fn from(p: FinitePmf) -> Self {
        p.probs
    }
}

/// Classical rate-distortion instance: source pmf, distortion matrix
/// `|𝒳| × |𝒳̂|`, and a target distortion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdInstance {
    pub source: FinitePmf,
    pub distortion: Vec<Vec<f64>>,
    pub target: f64,
}

impl RdInstance {
    pub fn new(source: FinitePmf, distortion: Vec<Vec<f64>>, target: f64) -> Result<Self> {
        let inst = Self {
            source,
            distortion,
            target,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.distortion.len() != self.source.len() {
            return Err(Error::DimensionMismatch {
                expected: self.source.len(),
                got: self.distortion.len(),
            });
        }
        let cols = self.reconstruction_size();
        if cols == 0 {
            return Err(Error::invalid("empty reconstruction alphabet"));
        }
        for row in &self.distortion {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: row.len(),
                });
            }
            if row.iter().any(|d| !d.is_finite()) {
                return Err(Error::invalid("distortion entries must be finite"));
            }
        }
        Ok(())
    }

    pub fn reconstruction_size(&self) -> usize {
        self.distortion.first().map(Vec::len).unwrap_or(0)
    }

    /// `Σ_x p(x) min_x̂ d(x, x̂)`: the smallest achievable distortion.
    pub fn min_distortion(&self) -> f64 {
        self.source
            .probs()
            .iter()
            .zip(&self.distortion)
            .map(|(p, row)| p * row.iter().copied().fold(f64::INFINITY, f64::min))
            .sum()
    }

    /// `min_x̂ E[d(X, x̂)]`: the distortion reachable at rate 0.
    pub fn zero_rate_distortion(&self) -> f64 {
        (0..self.reconstruction_size())
            .map(|j| {
                self.source
                    .probs()
                    .iter()
                    .zip(&self.distortion)
                    .map(|(p, row)| p * row[j])
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// `I(X;Y)` in nats for a joint pmf given as rows `x` × columns `y`.
pub fn mutual_information(joint: &[Vec<f64>]) -> f64 {
    let cols = joint.first().map(Vec::len).unwrap_or(0);
    let px: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let py: Vec<f64> = (0..cols)
        .map(|j| joint.iter().map(|r| r[j]).sum())
        .collect();
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (px[i] * py[j])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// `D(q‖p)` in nats; infinite when `q` puts mass where `p` has none.
pub fn kl_divergence(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(&qi, &pi)| {
            if qi == 0.0 {
                0.0
            } else if pi == 0.0 {
                f64::INFINITY
            } else {
                qi * (qi / pi).ln()
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmf_validation() {
        assert!(FinitePmf::new(vec![0.5, 0.5]).is_ok());
        assert!(FinitePmf::new(vec![0.5, 0.6]).is_err());
        assert!(FinitePmf::new(vec![-0.1, 1.1]).is_err());
        assert!(FinitePmf::new(vec![]).is_err());
        assert_eq!(
            FinitePmf::from_weights(&[1.0, 3.0]).unwrap().probs(),
            &[0.25, 0.75]
        );
    }

    #[test]
    fn pmf_json_round_trip_validates() {
        let p: FinitePmf = serde_json::from_str("[0.25, 0.75]").unwrap();
        assert_eq!(p.probs(), &[0.25, 0.75]);
        assert!(serde_json::from_str::<FinitePmf>("[0.5, 0.75]").is_err());
    }

    #[test]
    fn mutual_information_of_independent_and_copy() {
        assert!(mutual_information(&[vec![0.25, 0.25], vec![0.25, 0.25]]).abs() < 1e-15);
        let copy = mutual_information(&[vec![0.5, 0.0], vec![0.0, 0.5]]);
        assert!((copy - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn distortion_extremes() {
        let inst = RdInstance::new(
            FinitePmf::new(vec![0.5, 0.5]).unwrap(),
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            0.1,
        )
        .unwrap();
        assert_eq!(inst.min_distortion(), 0.0);
        assert_eq!(inst.zero_rate_distortion(), 0.5);
        assert!(RdInstance::new(FinitePmf::uniform(2), vec![vec![0.0]], 0.0).is_err());
    }
}
