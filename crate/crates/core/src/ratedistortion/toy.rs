use serde::{Deserialize, Serialize};

use super::algorithm::{
    algorithm_rd, conditional_algorithm_rd, AlgorithmRdInstance, ConditionalRdInstance,
};
use super::blahut::BaOptions;
use super::FinitePmf;
use crate::error::{Error, Result};

/// Largest number of (datasets × local-hypothesis tuples) enumerated.
const ENUMERATION_CAP: usize = 1 << 22;

/// Fully tabulated distributed algorithm on finite alphabets. Each of `k`
/// clients draws `n` i.i.d. samples from `sample_pmf`, picks a local
/// hypothesis from `local_kernel[s_i]`, and the server maps the tuple of
/// local hypotheses to an aggregate index. The compressed hypothesis space is
/// the aggregate space with the same loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteToy {
    pub k: usize,
    pub n: usize,
    pub sample_pmf: FinitePmf,
    /// `P(w_i | s_i)`, one row per local dataset `s_i = (z_1, …, z_n)`
    /// encoded as `Σ_j z_j·|𝒵|^j`.
    pub local_kernel: Vec<Vec<f64>>,
    /// Aggregate index for each tuple `(w_1, …, w_K)` encoded as `Σ_i w_i·|𝒲|^i`.
    pub aggregate: Vec<usize>,
    /// `ℓ(z, w̄)`.
    pub loss: Vec<Vec<f64>>,
}

/// Both minimization terms of the per-sample bound and of the looser
/// dataset-level bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem4Bounds {
    pub term_a: f64,
    pub term_b: f64,
    pub bound: f64,
    pub dataset_term_a: f64,
    pub dataset_term_b: f64,
    pub dataset_bound: f64,
    /// Exact `E[gen(S_{1:K}, W̄)]`.
    pub expected_gen: f64,
    /// `𝔯𝔇(P_{Z_{i,j}, W̄}, ε)` indexed `[i][j]`.
    pub per_sample_rd: Vec<Vec<f64>>,
}

impl FiniteToy {
    fn alphabet(&self) -> usize {
        self.sample_pmf.len()
    }

    fn local_size(&self) -> usize {
        self.local_kernel.first().map(Vec::len).unwrap_or(0)
    }

    fn aggregate_size(&self) -> usize {
        self.loss.first().map(Vec::len).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 {
            return Err(Error::invalid("toy needs K ≥ 1 and n ≥ 1"));
        }
        let nz = self.alphabet();
        let local_sets = checked_pow(nz, self.n)?;
        if self.local_kernel.len() != local_sets {
            return Err(Error::DimensionMismatch {
                expected: local_sets,
                got: self.local_kernel.len(),
            });
        }
        let nw = self.local_size();
        for row in &self.local_kernel {
            FinitePmf::new(row.clone())?;
            if row.len() != nw {
                return Err(Error::DimensionMismatch {
                    expected: nw,
                    got: row.len(),
                });
            }
        }
        let tuples = checked_pow(nw, self.k)?;
        if self.aggregate.len() != tuples {
            return Err(Error::DimensionMismatch {
                expected: tuples,
                got: self.aggregate.len(),
            });
        }
        if self.loss.len() != nz {
            return Err(Error::DimensionMismatch {
                expected: nz,
                got: self.loss.len(),
            });
        }
        let nbar = self.aggregate_size();
        if nbar == 0
            || self
                .loss
                .iter()
                .any(|r| r.len() != nbar || r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::invalid("loss table must be |𝒵| × |𝒲̄| and finite"));
        }
        if self.aggregate.iter().any(|&a| a >= nbar) {
            return Err(Error::invalid("aggregate index outside the loss table"));
        }
        let cells = checked_pow(local_sets, self.k)?.saturating_mul(tuples);
        if cells > ENUMERATION_CAP {
            return Err(Error::SupportTooLarge {
                atoms: cells,
                cap: ENUMERATION_CAP,
            });
        }
        Ok(())
    }

    /// `L(w̄) = E_μ[ℓ(Z, w̄)]`.
    pub fn population_loss(&self) -> Vec<f64> {
        (0..self.aggregate_size())
            .map(|w| {
                self.sample_pmf
                    .probs()
                    .iter()
                    .zip(&self.loss)
                    .map(|(p, row)| p * row[w])
                    .sum()
            })
            .collect()
    }
}

fn checked_pow(base: usize, exp: usize) -> Result<usize> {
    base.checked_pow(exp as u32)
        .filter(|v| *v <= ENUMERATION_CAP)
        .ok_or(Error::SupportTooLarge {
            atoms: usize::MAX,
            cap: ENUMERATION_CAP,
        })
}

fn digits(mut index: usize, base: usize, out: &mut [usize]) {
    for d in out.iter_mut() {
        *d = index % base;
        index /= base;
    }
}

/// Index of `w_{1:K∖i}` among `|𝒲|^{K−1}` peer tuples.
fn peer_index(w: &[usize], skip: usize, base: usize) -> usize {
    let mut idx = 0;
    let mut mult = 1;
    for (i, &wi) in w.iter().enumerate() {
        if i != skip {
            idx += wi * mult;
            mult *= base;
        }
    }
    idx
}

fn conditional_from_sums(
    mass: &[Vec<f64>],
    gen_sum: &[Vec<f64>],
    compressed: &[Vec<f64>],
    eps: f64,
) -> ConditionalRdInstance {
    let gen = mass
        .iter()
        .zip(gen_sum)
        .map(|(m, g)| {
            m.iter()
                .zip(g)
                .map(|(a, b)| if *a > 0.0 { b / a } else { 0.0 })
                .collect()
        })
        .collect();
    ConditionalRdInstance {
        joint: mass.to_vec(),
        gen,
        compressed_gen: vec![compressed.to_vec(); mass.len()],
        epsilon: eps,
    }
}

/// Evaluates both terms of the per-sample in-expectation bound (and its
/// dataset-level relaxation) by exact enumeration of the toy's joint law.
pub fn theorem4_bounds(
    toy: &FiniteToy,
    sigma: f64,
    epsilon: f64,
    opts: &BaOptions,
) -> Result<Theorem4Bounds> {
    toy.validate()?;
    if !(sigma > 0.0) {
        return Err(Error::invalid("σ must be positive"));
    }
    let (k, n) = (toy.k, toy.n);
    let nz = toy.alphabet();
    let nw = toy.local_size();
    let nbar = toy.aggregate_size();
    let local_sets = nz.pow(n as u32);
    let datasets = local_sets.pow(k as u32);
    let tuples = nw.pow(k as u32);
    let peers = nw.pow(k as u32 - 1);
    let pop = toy.population_loss();
    let mu = toy.sample_pmf.probs();

    // joint of (Z_ij, W̄) and of (Z_ij, W_{1:K∖i}) with gen sums
    let mut pa = vec![vec![vec![vec![0.0; nbar]; nz]; n]; k];
    let mut pb = vec![vec![vec![vec![0.0; nz]; peers]; n]; k];
    let mut gb = pb.clone();
    let mut p8a = vec![vec![0.0; nbar]; datasets];
    let mut p8b = vec![vec![vec![0.0; local_sets]; peers]; k];
    let mut g8b = p8b.clone();
    let mut expected_gen = 0.0;

    let mut z = vec![0usize; n * k];
    let mut w = vec![0usize; k];
    let mut local = vec![0usize; k];
    #[allow(clippy::needless_range_loop)]
    for s in 0..datasets {
        digits(s, nz, &mut z);
        digits(s, local_sets, &mut local);
        let ps: f64 = z.iter().map(|&zi| mu[zi]).product();
        if ps == 0.0 {
            continue;
        }
        for t in 0..tuples {
            digits(t, nw, &mut w);
            let pw: f64 = (0..k).map(|i| toy.local_kernel[local[i]][w[i]]).product();
            let mass = ps * pw;
            if mass == 0.0 {
                continue;
            }
            let wbar = toy.aggregate[t];
            p8a[s][wbar] += mass;
            let mut total_loss = 0.0;
            for i in 0..k {
                let u = peer_index(&w, i, nw);
                let mut client_loss = 0.0;
                for j in 0..n {
                    let zij = z[i * n + j];
                    let l = toy.loss[zij][wbar];
                    client_loss += l;
                    pa[i][j][zij][wbar] += mass;
                    pb[i][j][u][zij] += mass;
                    gb[i][j][u][zij] += mass * (pop[wbar] - l);
                }
                p8b[i][u][local[i]] += mass;
                g8b[i][u][local[i]] += mass * (pop[wbar] - client_loss / n as f64);
                total_loss += client_loss;
            }
            expected_gen += mass * (pop[wbar] - total_loss / (n * k) as f64);
        }
    }

    let sample_gen: Vec<Vec<f64>> = (0..nz)
        .map(|zi| (0..nbar).map(|wb| pop[wb] - toy.loss[zi][wb]).collect())
        .collect();
    let local_gen: Vec<Vec<f64>> = (0..local_sets)
        .map(|s| {
            let mut zs = vec![0; n];
            digits(s, nz, &mut zs);
            (0..nbar)
                .map(|wb| pop[wb] - zs.iter().map(|&zi| toy.loss[zi][wb]).sum::<f64>() / n as f64)
                .collect()
        })
        .collect();
    let dataset_gen: Vec<Vec<f64>> = (0..datasets)
        .map(|s| {
            digits(s, nz, &mut z);
            (0..nbar)
                .map(|wb| {
                    pop[wb] - z.iter().map(|&zi| toy.loss[zi][wb]).sum::<f64>() / (n * k) as f64
                })
                .collect()
        })
        .collect();
    let root = |rd: f64| (2.0 * sigma * sigma * rd).sqrt();

    let mut per_sample_rd = vec![vec![0.0; n]; k];
    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    for j in 0..n {
        let mut max_rd = 0.0f64;
        for i in 0..k {
            let inst = AlgorithmRdInstance {
                joint: pa[i][j].clone(),
                gen: sample_gen.clone(),
                compressed_gen: sample_gen.clone(),
                epsilon,
            };
            let rd = algorithm_rd(&inst, opts)?.rate;
            per_sample_rd[i][j] = rd;
            sum_a += root(rd);
            let cond = conditional_from_sums(&pb[i][j], &gb[i][j], &sample_gen, epsilon);
            max_rd = max_rd.max(conditional_algorithm_rd(&cond, opts)?.rate);
        }
        sum_b += root(max_rd);
    }
    let term_a = (sum_a / k as f64 + epsilon) / n as f64;
    let term_b = (sum_b + epsilon) / n as f64;

    let rd_all = algorithm_rd(
        &AlgorithmRdInstance {
            joint: p8a,
            gen: dataset_gen.clone(),
            compressed_gen: dataset_gen,
            epsilon,
        },
        opts,
    )?
    .rate;
    let mut max_rd_i = 0.0f64;
    for i in 0..k {
        let cond = conditional_from_sums(&p8b[i], &g8b[i], &local_gen, epsilon);
        max_rd_i = max_rd_i.max(conditional_algorithm_rd(&cond, opts)?.rate);
    }
    let scale = 1.0 / (n as f64).sqrt();
    let dataset_term_a = scale * ((2.0 * sigma * sigma * rd_all / k as f64).sqrt() + epsilon);
    let dataset_term_b = scale * (root(max_rd_i) + epsilon);

    Ok(Theorem4Bounds {
        term_a,
        term_b,
        bound: term_a.min(term_b),
        dataset_term_a,
        dataset_term_b,
        dataset_bound: dataset_term_a.min(dataset_term_b),
        expected_gen,
        per_sample_rd,
    })
}

/// `K = 2`, `n = 1`, binary samples, each client outputs its sample through a
/// binary symmetric channel with flip probability `flip`, and the server
/// takes the majority with ties broken towards 1. Loss is `1{z ≠ w̄}`.
pub fn majority_toy(p_one: f64, flip: f64) -> Result<FiniteToy> {
    Ok(FiniteToy {
        k: 2,
        n: 1,
        sample_pmf: FinitePmf::new(vec![1.0 - p_one, p_one])?,
        local_kernel: vec![vec![1.0 - flip, flip], vec![flip, 1.0 - flip]],
        // tuples (w1, w2) encoded as w1 + 2·w2: (0,0) → 0, otherwise 1
        aggregate: vec![0, 1, 1, 1],
        loss: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
    })
}
