use serde::{Deserialize, Serialize};

use super::blahut::{BaOptions, BaPoint, Part, SlopeSolver};
use crate::error::{Error, Result};

/// Joint `Q` over datasets × hypotheses with generalization tables for the
/// original and the compressed hypothesis spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmRdInstance {
    /// `Q(s, w)`, rows indexed by `s`.
    pub joint: Vec<Vec<f64>>,
    /// `gen(s, w)`.
    pub gen: Vec<Vec<f64>>,
    /// `gen(s, ŵ)` under the compressed loss.
    pub compressed_gen: Vec<Vec<f64>>,
    pub epsilon: f64,
}

/// Conditional instance for one client: `u` indexes peer hypotheses
/// `w_{1:K∖i}`, `s` the client's dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionalRdInstance {
    /// `Q(u, s)`, rows indexed by `u`.
    pub joint: Vec<Vec<f64>>,
    /// `E_Q[gen(s, W̄) | s, u]`.
    pub gen: Vec<Vec<f64>>,
    /// `gen(s, ŵ)` for each `u`: `compressed_gen[u][s][ŵ]`.
    pub compressed_gen: Vec<Vec<Vec<f64>>>,
    pub epsilon: f64,
}

fn check_joint(joint: &[Vec<f64>]) -> Result<usize> {
    let cols = joint.first().map(Vec::len).unwrap_or(0);
    if cols == 0 {
        return Err(Error::invalid("empty joint pmf"));
    }
    let mut total = 0.0;
    for row in joint {
        if row.len() != cols {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: row.len(),
            });
        }
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(
                "joint pmf entries must be finite and nonnegative",
            ));
        }
        total += row.iter().sum::<f64>();
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("joint pmf sums to {total}, not 1")));
    }
    Ok(cols)
}

fn check_table(table: &[Vec<f64>], rows: usize, cols: Option<usize>) -> Result<usize> {
    if table.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            got: table.len(),
        });
    }
    let width = cols.unwrap_or_else(|| table.first().map(Vec::len).unwrap_or(0));
    if width == 0 {
        return Err(Error::invalid("empty table"));
    }
    for row in table {
        if row.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("table entries must be finite"));
        }
    }
    Ok(width)
}

impl AlgorithmRdInstance {
    pub fn validate(&self) -> Result<()> {
        let w = check_joint(&self.joint)?;
        check_table(&self.gen, self.joint.len(), Some(w))?;
        check_table(&self.compressed_gen, self.joint.len(), None)?;
        if !self.epsilon.is_finite() {
            return Err(Error::invalid("epsilon must be finite"));
        }
        Ok(())
    }

    /// `Q_S`.
    pub fn source_marginal(&self) -> Vec<f64> {
        self.joint.iter().map(|r| r.iter().sum()).collect()
    }

    /// `E_Q[gen(S, W)]`.
    pub fn expected_gen(&self) -> f64 {
        self.joint
            .iter()
            .zip(&self.gen)
            .map(|(q, g)| q.iter().zip(g).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    /// Distortion matrix `ρ(s, ŵ) = −gen(s, ŵ)` and level `ε − E_Q[gen(S, W)]`.
    pub fn reduced(&self) -> (Vec<Vec<f64>>, f64) {
        let rho = self
            .compressed_gen
            .iter()
            .map(|r| r.iter().map(|g| -g).collect())
            .collect();
        (rho, self.epsilon - self.expected_gen())
    }
}

impl ConditionalRdInstance {
    pub fn validate(&self) -> Result<()> {
        let s = check_joint(&self.joint)?;
        check_table(&self.gen, self.joint.len(), Some(s))?;
        if self.compressed_gen.len() != self.joint.len() {
            return Err(Error::DimensionMismatch {
                expected: self.joint.len(),
                got: self.compressed_gen.len(),
            });
        }
        let width = check_table(&self.compressed_gen[0], s, None)?;
        for table in &self.compressed_gen {
            check_table(table, s, Some(width))?;
        }
        if !self.epsilon.is_finite() {
            return Err(Error::invalid("epsilon must be finite"));
        }
        Ok(())
    }

    /// `Q(u)`.
    pub fn conditioning_marginal(&self) -> Vec<f64> {
        self.joint.iter().map(|r| r.iter().sum()).collect()
    }

    /// `E_Q[gen(S, W̄)]`.
    pub fn expected_gen(&self) -> f64 {
        self.joint
            .iter()
            .zip(&self.gen)
            .map(|(q, g)| q.iter().zip(g).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    /// Single-`u` instance with the same joint over `s`.
    pub fn from_unconditional(inst: &AlgorithmRdInstance) -> Self {
        let row: Vec<f64> = inst.source_marginal();
        let gen = inst
            .joint
            .iter()
            .zip(&inst.gen)
            .zip(&row)
            .map(|((q, g), qs)| {
                if *qs > 0.0 {
                    q.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / qs
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            joint: vec![row],
            gen: vec![gen],
            compressed_gen: vec![inst.compressed_gen.clone()],
            epsilon: inst.epsilon,
        }
    }
}

/// `𝔯𝔇(Q, ε)`: the smallest `I(S; Ŵ)` over kernels `P_{Ŵ|S}` with
/// `E_Q[gen(S, W)] − E[gen(S, Ŵ)] ≤ ε`.
pub fn algorithm_rd(inst: &AlgorithmRdInstance, opts: &BaOptions) -> Result<BaPoint> {
    inst.validate()?;
    let (rho, level) = inst.reduced();
    let qs = inst.source_marginal();
    SlopeSolver::new(&[(1.0, &qs, &rho)], *opts).solve_target(level)
}

/// `𝔯𝔇ᵢ(Q, ε)`: the smallest `I(Sᵢ; Ŵᵢ | W_{1:K∖i})` subject to one averaged
/// distortion constraint, solved with a slope shared across conditioning values.
pub fn conditional_algorithm_rd(inst: &ConditionalRdInstance, opts: &BaOptions) -> Result<BaPoint> {
    inst.validate()?;
    let qu = inst.conditioning_marginal();
    let conditionals: Vec<Vec<f64>> = inst
        .joint
        .iter()
        .zip(&qu)
        .map(|(row, m)| {
            if *m > 0.0 {
                row.iter().map(|p| p / m).collect()
            } else {
                row.clone()
            }
        })
        .collect();
    let rhos: Vec<Vec<Vec<f64>>> = inst
        .compressed_gen
        .iter()
        .map(|t| t.iter().map(|r| r.iter().map(|g| -g).collect()).collect())
        .collect();
    let parts: Vec<Part<'_>> = qu
        .iter()
        .zip(&conditionals)
        .zip(&rhos)
        .map(|((w, p), d)| (*w, p.as_slice(), d.as_slice()))
        .collect();
    SlopeSolver::new(&parts, *opts).solve_target(inst.epsilon - inst.expected_gen())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> AlgorithmRdInstance {
        AlgorithmRdInstance {
            joint: vec![vec![0.3, 0.2], vec![0.1, 0.4]],
            gen: vec![vec![0.5, -0.5], vec![-0.2, 0.3]],
            compressed_gen: vec![vec![0.4, -0.4, 0.0], vec![-0.3, 0.3, 0.0]],
            epsilon: 0.0,
        }
    }

    #[test]
    fn large_epsilon_gives_zero_rate() {
        let mut inst = toy();
        inst.epsilon = 10.0;
        assert_eq!(
            algorithm_rd(&inst, &BaOptions::default()).unwrap().rate,
            0.0
        );
    }

    #[test]
    fn rate_decreases_in_epsilon() {
        let mut inst = toy();
        let mut last = f64::INFINITY;
        for e in [-0.05, 0.0, 0.05, 0.1, 0.2] {
            inst.epsilon = e;
            let r = algorithm_rd(&inst, &BaOptions::default()).unwrap().rate;
            assert!(r <= last + 1e-9);
            last = r;
        }
    }

    #[test]
    fn infeasible_epsilon_is_reported() {
        let mut inst = toy();
        inst.epsilon = -5.0;
        assert!(matches!(
            algorithm_rd(&inst, &BaOptions::default()),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn single_conditioning_value_matches_unconditional() {
        let inst = toy();
        let a = algorithm_rd(&inst, &BaOptions::default()).unwrap().rate;
        let c = conditional_algorithm_rd(
            &ConditionalRdInstance::from_unconditional(&inst),
            &BaOptions::default(),
        )
        .unwrap()
        .rate;
        assert!((a - c).abs() < 1e-9, "{a} vs {c}");
    }

    #[test]
    fn independent_conditioning_matches_unconditional() {
        let base = toy();
        let single = ConditionalRdInstance::from_unconditional(&base);
        let qu = [0.25, 0.75];
        let inst = ConditionalRdInstance {
            joint: qu
                .iter()
                .map(|w| single.joint[0].iter().map(|p| w * p).collect())
                .collect(),
            gen: vec![single.gen[0].clone(); 2],
            compressed_gen: vec![single.compressed_gen[0].clone(); 2],
            epsilon: base.epsilon,
        };
        let a = algorithm_rd(&base, &BaOptions::default()).unwrap().rate;
        let c = conditional_algorithm_rd(&inst, &BaOptions::default())
            .unwrap()
            .rate;
        assert!((a - c).abs() < 1e-8, "{a} vs {c}");
    }

    #[test]
    fn json_round_trip() {
        let inst = toy();
        let text = serde_json::to_string(&inst).unwrap();
        assert_eq!(
            serde_json::from_str::<AlgorithmRdInstance>(&text).unwrap(),
            inst
        );
        assert!(serde_json::from_str::<AlgorithmRdInstance>(
            r#"{"joint":[[1.0]],"gen":[[0.0]],"compressed_gen":[[0.0]],"epsilon":0,"extra":1}"#
        )
        .is_err());
    }
}
