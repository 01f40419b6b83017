use serde::{Deserialize, Serialize};

use super::algorithm::{conditional_algorithm_rd, ConditionalRdInstance};
use super::blahut::BaOptions;
use super::kl_divergence;
use crate::error::{Error, Result};

/// Largest joint support accepted by [`robust_rd`].
pub const ROBUST_ATOM_CAP: usize = 12;

/// One support point of the base joint: a peer-hypothesis index `u`, a
/// client-dataset index `s`, and `gen(s, W̄)` at that point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustAtom {
    pub prob: f64,
    pub u: usize,
    pub s: usize,
    pub gen: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustInstance {
    pub atoms: Vec<RobustAtom>,
    /// `compressed_gen[u][s][ŵ]`.
    pub compressed_gen: Vec<Vec<Vec<f64>>>,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustOptions {
    /// Mass-transfer fractions `2^-1, …, 2^-levels` are tried in turn.
    pub levels: u32,
    pub max_moves_per_level: usize,
    pub ba: BaOptions,
}

impl Default for RobustOptions {
    fn default() -> Self {
        Self {
            levels: 6,
            max_moves_per_level: 200,
            ba: BaOptions::default(),
        }
    }
}

/// Best value found; a lower estimate of the supremum over the KL ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustResult {
    pub value: f64,
    pub value_at_base: f64,
    /// Finest mass-transfer fraction used.
    pub resolution: f64,
    pub kl: f64,
    pub distribution: Vec<f64>,
}

impl RobustInstance {
    pub fn validate(&self) -> Result<()> {
        if self.atoms.len() > ROBUST_ATOM_CAP {
            return Err(Error::SupportTooLarge {
                atoms: self.atoms.len(),
                cap: ROBUST_ATOM_CAP,
            });
        }
        if self.atoms.is_empty() {
            return Err(Error::invalid("no atoms"));
        }
        let total: f64 = self.atoms.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > 1e-9 || self.atoms.iter().any(|a| !(a.prob >= 0.0)) {
            return Err(Error::invalid("atom probabilities must form a pmf"));
        }
        let n_u = self.compressed_gen.len();
        let n_s = self.compressed_gen.first().map(Vec::len).unwrap_or(0);
        if self
            .atoms
            .iter()
            .any(|a| a.u >= n_u || a.s >= n_s || !a.gen.is_finite())
        {
            return Err(Error::invalid("atom index outside the compressed table"));
        }
        Ok(())
    }

    fn base(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.prob).collect()
    }

    /// Conditional instance induced by reweighting the atoms with `q`.
    pub fn conditional(&self, q: &[f64]) -> ConditionalRdInstance {
        let n_u = self.compressed_gen.len();
        let n_s = self.compressed_gen[0].len();
        let mut joint = vec![vec![0.0; n_s]; n_u];
        let mut gen = vec![vec![0.0; n_s]; n_u];
        for (a, &p) in self.atoms.iter().zip(q) {
            joint[a.u][a.s] += p;
            gen[a.u][a.s] += p * a.gen;
        }
        for (jr, gr) in joint.iter().zip(&mut gen) {
            for (j, g) in jr.iter().zip(gr.iter_mut()) {
                if *j > 0.0 {
                    *g /= j;
                }
            }
        }
        ConditionalRdInstance {
            joint,
            gen,
            compressed_gen: self.compressed_gen.clone(),
            epsilon: self.epsilon,
        }
    }
}

/// Searches the ball `{Q : D(Q‖P) ≤ ln(1/δ)}` for the largest conditional
/// rate-distortion value by mass-transfer ascent between atoms. Each level
/// halves the transfer fraction and starts from the previous level's best
/// point, so more levels never lower the result.
pub fn robust_rd(inst: &RobustInstance, delta: f64, opts: &RobustOptions) -> Result<RobustResult> {
    inst.validate()?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("δ must lie in (0, 1)"));
    }
    let radius = (1.0 / delta).ln();
    let base = inst.base();
    let eval = |q: &[f64]| conditional_algorithm_rd(&inst.conditional(q), &opts.ba).map(|p| p.rate);
    let value_at_base = eval(&base)?;
    let mut best_q = base.clone();
    let mut best = value_at_base;
    let n = base.len();
    for level in 1..=opts.levels {
        let frac = 0.5f64.powi(level as i32);
        for _ in 0..opts.max_moves_per_level {
            let mut improved: Option<(f64, Vec<f64>)> = None;
            for from in 0..n {
                if best_q[from] <= 0.0 {
                    continue;
                }
                for to in 0..n {
                    if to == from {
                        continue;
                    }
                    let mut q = best_q.clone();
                    let moved = frac * q[from];
                    q[from] -= moved;
                    q[to] += moved;
                    if kl_divergence(&q, &base) > radius {
                        continue;
                    }
                    // infeasible reweightings are skipped
                    let Ok(v) = eval(&q) else { continue };
                    let bar = improved.as_ref().map_or(best, |(b, _)| *b);
                    if v > bar + 1e-12 {
                        improved = Some((v, q));
                    }
                }
            }
            match improved {
                Some((v, q)) => {
                    best = v;
                    best_q = q;
                }
                None => break,
            }
        }
    }
    Ok(RobustResult {
        value: best,
        value_at_base,
        resolution: 0.5f64.powi(opts.levels as i32),
        kl: kl_divergence(&best_q, &base),
        distribution: best_q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RobustInstance {
        let cg = vec![
            vec![vec![0.3, -0.3], vec![-0.2, 0.2]],
            vec![vec![0.1, -0.1], vec![-0.4, 0.4]],
        ];
        RobustInstance {
            atoms: vec![
                RobustAtom {
                    prob: 0.3,
                    u: 0,
                    s: 0,
                    gen: 0.3,
                },
                RobustAtom {
                    prob: 0.2,
                    u: 0,
                    s: 1,
                    gen: 0.2,
                },
                RobustAtom {
                    prob: 0.25,
                    u: 1,
                    s: 0,
                    gen: 0.1,
                },
                RobustAtom {
                    prob: 0.25,
                    u: 1,
                    s: 1,
                    gen: 0.4,
                },
            ],
            compressed_gen: cg,
            epsilon: 0.05,
        }
    }

    #[test]
    fn delta_near_one_returns_base_value() {
        let inst = tiny();
        let r = robust_rd(&inst, 1.0 - 1e-12, &RobustOptions::default()).unwrap();
        let at_p = conditional_algorithm_rd(&inst.conditional(&inst.base()), &BaOptions::default())
            .unwrap()
            .rate;
        assert_eq!(r.value, at_p);
    }

    #[test]
    fn ball_search_dominates_base_and_is_monotone_in_levels() {
        let inst = tiny();
        let mut last = f64::NEG_INFINITY;
        for levels in 1..=4 {
            let r = robust_rd(
                &inst,
                0.5,
                &RobustOptions {
                    levels,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(r.value >= r.value_at_base);
            assert!(r.kl <= 2f64.ln() + 1e-12);
            assert!(r.value >= last);
            last = r.value;
        }
    }

    #[test]
    fn support_cap_enforced() {
        let mut inst = tiny();
        inst.atoms = vec![
            RobustAtom {
                prob: 1.0 / 13.0,
                u: 0,
                s: 0,
                gen: 0.0
            };
            13
        ];
        assert!(matches!(
            robust_rd(&inst, 0.5, &RobustOptions::default()),
            Err(Error::SupportTooLarge { atoms: 13, .. })
        ));
    }
}
