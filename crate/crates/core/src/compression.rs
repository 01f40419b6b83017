//! Compressed hypotheses for the one-round distributed SVM.
//!
//! Client `i`'s own weight block is replaced by a noisy JL projection: if
//! `‖𝖠wᵢ‖ ≤ c₂` the block is drawn uniformly from the radius-`ν` ball around
//! `𝖠wᵢ`, otherwise from the radius-`ν` ball around the origin. Peer blocks
//! are kept verbatim. [`estimate_distortion_da`] measures how often the
//! compressed score drifts by more than `θ/2` from the original one, and
//! [`validate_lemma3`] compares that frequency, averaged over random
//! matrices, with the analytic level `ε` of [`crate::bounds::epsilon_terms`].

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{dsvm_rate_term, epsilon_terms, EpsilonBreakdown, SvmBoundParams};
use crate::datasets::{self, Dataset};
use crate::error::{Error, Result};
use crate::features::{jl_norm_tail, JlMatrix};
use crate::learners::Hypothesis;
use crate::linalg;
use crate::rng::{self, Stream};
use crate::stats::mean_se;

const BATCH: usize = 1024;

/// Construction parameters; the defaults come from [`SvmBoundParams::refit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionParams {
    pub m: usize,
    pub c1: f64,
    pub c2: f64,
    pub nu: f64,
    pub theta: f64,
    pub b: f64,
    pub k: usize,
    pub seed: u64,
}

impl CompressionParams {
    pub fn from_bound(p: &SvmBoundParams, seed: u64) -> Self {
        Self {
            m: p.m,
            c1: p.c1,
            c2: p.c2,
            nu: p.nu,
            theta: p.theta,
            b: p.b,
            k: p.k,
            seed,
        }
    }

    /// Default parameters for `n` samples per client.
    pub fn refit(n: usize, k: usize, theta: f64, b: f64, seed: u64) -> Self {
        Self::from_bound(&SvmBoundParams::refit(n, k, theta, b, 0.05), seed)
    }

    /// Bound parameters sharing `(m, c₁, c₂, ν, θ, B, K)`.
    pub fn bound_params(&self, n: usize) -> SvmBoundParams {
        SvmBoundParams {
            n,
            k: self.k,
            b: self.b,
            theta: self.theta,
            delta: 0.05,
            m: self.m,
            c1: self.c1,
            c2: self.c2,
            nu: self.nu,
            sigma: 1.0,
        }
    }

    /// `m·ln((c₂+ν)/ν)`, the log-volume ratio bounding the compressed entropy.
    pub fn rate(&self) -> f64 {
        dsvm_rate_term(&self.bound_params(1))
    }

    pub fn epsilon(&self, tight: bool) -> EpsilonBreakdown {
        epsilon_terms(&self.bound_params(1), tight)
    }

    pub fn validate(&self) -> Result<()> {
        self.bound_params(1).validate()
    }
}

/// Fills `out` with a uniform draw from the ball of radius `nu`.
pub fn fill_uniform_ball(r: &mut Stream, nu: f64, out: &mut [f64]) {
    loop {
        rng::fill_standard_normal(r, out);
        let nrm = linalg::norm(out);
        if nrm > 0.0 {
            let radius = nu * rng::unit_uniform(r).powf(1.0 / out.len() as f64);
            linalg::scale(radius / nrm, out);
            return;
        }
    }
}

/// Uniform draw from the `m`-dimensional ball of radius `nu`.
pub fn sample_uniform_ball(m: usize, nu: f64, seed: u64) -> Result<Vec<f64>> {
    if m == 0 || !(nu > 0.0) {
        return Err(Error::invalid("uniform ball needs m ≥ 1 and ν > 0"));
    }
    let mut out = vec![0.0; m];
    fill_uniform_ball(&mut rng::stream(seed), nu, &mut out);
    Ok(out)
}

/// `Ŵᵢ`: the compressed own block plus the verbatim peer blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedHypothesis<'a> {
    pub hat_w_ii: Vec<f64>,
    pub others: Vec<Hypothesis>,
    pub owner: usize,
    pub jl: &'a JlMatrix,
}

impl CompressedHypothesis<'_> {
    pub fn k(&self) -> usize {
        self.others.len() + 1
    }
}

/// Centre of the noise ball: `𝖠w` if `‖𝖠w‖ ≤ c₂`, else the origin.
fn ball_centre(aw: &[f64], c2: f64) -> Option<&[f64]> {
    (linalg::norm(aw) <= c2).then_some(aw)
}

pub fn compress<'a>(
    w_i: &Hypothesis,
    peers: &[Hypothesis],
    owner: usize,
    jl: &'a JlMatrix,
    params: &CompressionParams,
    seed: u64,
) -> Result<CompressedHypothesis<'a>> {
    params.validate()?;
    if jl.m() != params.m {
        return Err(Error::DimensionMismatch {
            expected: params.m,
            got: jl.m(),
        });
    }
    if peers.len() + 1 != params.k || owner >= params.k {
        return Err(Error::invalid(format!(
            "expected {} peers and owner < {}, got {} peers and owner {owner}",
            params.k - 1,
            params.k,
            peers.len()
        )));
    }
    for h in peers {
        if h.dim() != w_i.dim() {
            return Err(Error::DimensionMismatch {
                expected: w_i.dim(),
                got: h.dim(),
            });
        }
    }
    let aw = jl.project(&w_i.w)?;
    let mut hat = vec![0.0; params.m];
    fill_uniform_ball(&mut rng::stream(seed), params.nu, &mut hat);
    if let Some(c) = ball_centre(&aw, params.c2) {
        linalg::axpy(1.0, c, &mut hat);
    }
    Ok(CompressedHypothesis {
        hat_w_ii: hat,
        others: peers.to_vec(),
        owner,
        jl,
    })
}

/// `(⟨𝖠x, ŵᵢᵢ⟩ + Σ_{j≠i}⟨x, w_j⟩)/K`.
pub fn compressed_score(x: &[f64], h: &CompressedHypothesis<'_>) -> Result<f64> {
    let ax = h.jl.project(x)?;
    let mut total = linalg::dot(&ax, &h.hat_w_ii);
    for p in &h.others {
        if p.dim() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: p.dim(),
                got: x.len(),
            });
        }
        total += p.score(x);
    }
    Ok(total / h.k() as f64)
}

/// `1{y·score < θ/2}`.
pub fn compressed_loss(x: &[f64], y: f64, h: &CompressedHypothesis<'_>, theta: f64) -> Result<f64> {
    Ok(if y * compressed_score(x, h)? < theta / 2.0 {
        1.0
    } else {
        0.0
    })
}

/// Monte Carlo estimate of the distortion `D_𝖠` for one matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaEstimate {
    pub estimate: f64,
    pub se: f64,
    /// Estimates of the four union-bound pieces `D_{𝖠,1..4}`.
    pub terms: [f64; 4],
    /// Fraction of fresh samples with `‖𝖠x‖ ≥ c₁‖x‖`.
    pub sphere_tail: f64,
    pub draws: usize,
}

/// Per-draw counters, summed in batch order.
#[derive(Debug, Clone, Default)]
struct Tally {
    draws: usize,
    sum: f64,
    sum_sq: f64,
    jl_inner: [usize; 2],
    noise_cond: [usize; 2],
    noise_hit: [usize; 2],
    big_ax: [usize; 2],
    big_aw: usize,
    sphere: usize,
}

impl Tally {
    fn merge(mut self, o: &Tally) -> Tally {
        self.draws += o.draws;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        for s in 0..2 {
            self.jl_inner[s] += o.jl_inner[s];
            self.noise_cond[s] += o.noise_cond[s];
            self.noise_hit[s] += o.noise_hit[s];
            self.big_ax[s] += o.big_ax[s];
        }
        self.big_aw += o.big_aw;
        self.sphere += o.sphere;
        self
    }

    fn finish(&self) -> DaEstimate {
        let n = self.draws as f64;
        let mean = self.sum / n;
        let var = if self.draws > 1 {
            ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        let frac = |c: usize| c as f64 / n;
        let cond = |s: usize| {
            if self.noise_cond[s] == 0 {
                0.0
            } else {
                self.noise_hit[s] as f64 / self.noise_cond[s] as f64
            }
        };
        DaEstimate {
            estimate: mean,
            se: (var / n).sqrt(),
            terms: [
                frac(self.jl_inner[0]) + frac(self.jl_inner[1]),
                cond(0) + cond(1),
                frac(self.big_ax[0]) + frac(self.big_ax[1]),
                2.0 * frac(self.big_aw),
            ],
            sphere_tail: frac(self.sphere),
            draws: self.draws,
        }
    }
}

struct Client<'d> {
    shard: &'d Dataset,
    w: &'d Hypothesis,
    aw: Vec<f64>,
}

struct Sampler<'d> {
    population: &'d Dataset,
    clients: Vec<Client<'d>>,
    jl: &'d JlMatrix,
    params: CompressionParams,
}

impl Sampler<'_> {
    fn new<'d>(
        population: &'d Dataset,
        clients: &'d [(Dataset, Hypothesis)],
        jl: &'d JlMatrix,
        params: &CompressionParams,
    ) -> Result<Sampler<'d>> {
        params.validate()?;
        if jl.m() != params.m {
            return Err(Error::DimensionMismatch {
                expected: params.m,
                got: jl.m(),
            });
        }
        if population.is_empty() || clients.is_empty() || clients.iter().any(|(s, _)| s.is_empty())
        {
            return Err(Error::EmptyDataset);
        }
        let clients = clients
            .iter()
            .map(|(shard, w)| {
                if shard.dim() != jl.input_dim() || population.dim() != jl.input_dim() {
                    return Err(Error::DimensionMismatch {
                        expected: jl.input_dim(),
                        got: shard.dim().max(population.dim()),
                    });
                }
                Ok(Client {
                    shard,
                    w,
                    aw: jl.project(&w.w)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sampler {
            population,
            clients,
            jl,
            params: *params,
        })
    }

    /// One side of a draw: returns whether the full score drift exceeds `θ/2`.
    fn side(
        &self,
        side: usize,
        x: &[f64],
        c: &Client<'_>,
        r: &mut Stream,
        buf: &mut Buffers,
        t: &mut Tally,
    ) -> bool {
        let p = &self.params;
        let k = p.k as f64;
        self.jl
            .project_into(x, &mut buf.ax)
            .expect("dimension checked");
        fill_uniform_ball(r, p.nu, &mut buf.noise);
        let exact = c.w.score(x);
        let ax_aw = linalg::dot(&buf.ax, &c.aw);
        let ax_v = linalg::dot(&buf.ax, &buf.noise);
        let ax_norm = linalg::norm(&buf.ax);
        let aw_small = linalg::norm(&c.aw) <= p.c2;
        let approx = if aw_small { ax_aw + ax_v } else { ax_v };
        if (exact - ax_aw).abs() / k > p.theta / 4.0 {
            t.jl_inner[side] += 1;
        }
        if ax_norm <= p.c1 * p.b && aw_small {
            t.noise_cond[side] += 1;
            if ax_v.abs() / k > p.theta / 4.0 {
                t.noise_hit[side] += 1;
            }
        }
        if ax_norm >= p.c1 * p.b {
            t.big_ax[side] += 1;
        }
        if side == 0 {
            let xn = linalg::norm(x);
            if xn > 0.0 && ax_norm >= p.c1 * xn {
                t.sphere += 1;
            }
        }
        (exact - approx).abs() / k > p.theta / 2.0
    }

    fn batch(&self, seed: u64, start: usize, len: usize) -> Tally {
        let mut r = rng::stream(seed);
        let mut buf = Buffers {
            ax: vec![0.0; self.params.m],
            noise: vec![0.0; self.params.m],
        };
        let mut t = Tally::default();
        for d in start..start + len {
            let c = &self.clients[d % self.clients.len()];
            let zi = r.random_range(0..self.population.len());
            let si = r.random_range(0..c.shard.len());
            let pop = self.side(0, self.population.row(zi), c, &mut r, &mut buf, &mut t);
            let emp = self.side(1, c.shard.row(si), c, &mut r, &mut buf, &mut t);
            if linalg::norm(&c.aw) >= self.params.c2 {
                t.big_aw += 1;
            }
            let v = f64::from(u8::from(pop)) + f64::from(u8::from(emp));
            t.draws += 1;
            t.sum += v;
            t.sum_sq += v * v;
        }
        t
    }

    fn run(&self, n_mc: usize, seed: u64) -> DaEstimate {
        let batches: Vec<(usize, usize)> = (0..n_mc)
            .step_by(BATCH)
            .map(|s| (s, BATCH.min(n_mc - s)))
            .collect();
        let tallies: Vec<Tally> = batches
            .par_iter()
            .enumerate()
            .map(|(b, &(start, len))| {
                self.batch(rng::child_seed(seed, "da-batch", b as u64), start, len)
            })
            .collect();
        tallies.iter().fold(Tally::default(), Tally::merge).finish()
    }
}

struct Buffers {
    ax: Vec<f64>,
    noise: Vec<f64>,
}

/// Estimates `D_𝖠` for client weights `w_i` trained on `shard`: the
/// population term draws fresh points from `population`, the empirical term
/// draws points of `shard`, and each side draws its own ball noise. Peer
/// blocks cancel in the score difference and do not enter.
pub fn estimate_distortion_da(
    population: &Dataset,
    shard: &Dataset,
    w_i: &Hypothesis,
    jl: &JlMatrix,
    params: &CompressionParams,
    n_mc: usize,
) -> Result<DaEstimate> {
    if n_mc < 100 {
        return Err(Error::invalid("n_mc must be at least 100"));
    }
    let clients = [(shard.clone(), w_i.clone())];
    let s = Sampler::new(population, &clients, jl, params)?;
    Ok(s.run(n_mc, params.seed))
}

/// Two-cluster data rescaled so that `E‖X‖² ≈ (norm_fraction·B)²`, then
/// clipped to `‖X‖ ≤ B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundedDataModel {
    pub dim: usize,
    pub separation: f64,
    pub label_noise: f64,
    pub norm_fraction: f64,
    pub b: f64,
}

impl Default for BoundedDataModel {
    /// Norms around `B/√2`, the scale of random Fourier features under their
    /// `√2` bound.
    fn default() -> Self {
        Self {
            dim: 50,
            separation: 3.0,
            label_noise: 0.0,
            norm_fraction: std::f64::consts::FRAC_1_SQRT_2,
            b: 1.0,
        }
    }
}

impl BoundedDataModel {
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if !(self.norm_fraction > 0.0 && self.b > 0.0) {
            return Err(Error::invalid(
                "data model needs positive norm_fraction and B",
            ));
        }
        let raw = datasets::synth_two_gaussians(
            self.dim,
            n.max(2),
            self.separation,
            self.label_noise,
            seed,
        )?;
        let rms = (self.dim as f64 + self.separation * self.separation / 4.0).sqrt();
        let s = self.norm_fraction * self.b / rms;
        let scaled = raw.map_rows(self.dim, |src, dst| {
            for (o, x) in dst.iter_mut().zip(src) {
                *o = s * x;
            }
        });
        let clipped = datasets::clip_norms(&scaled, self.b);
        Ok(if n < 2 { clipped.slice(0, n) } else { clipped })
    }
}

/// Local rule used in the validation: the unit-norm class-mean direction
/// `Σ yⱼxⱼ / ‖Σ yⱼxⱼ‖`.
pub fn unit_mean_direction(shard: &Dataset) -> Hypothesis {
    let mut w = vec![0.0; shard.dim()];
    for (x, y) in shard.rows() {
        linalg::axpy(y, x, &mut w);
    }
    let n = linalg::norm(&w);
    if n > 0.0 {
        linalg::scale(1.0 / n, &mut w);
    } else if let Some(first) = w.first_mut() {
        *first = 1.0;
    }
    Hypothesis::new(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lemma3Options {
    pub n_mc: usize,
    pub n_matrices: usize,
    /// Samples per client shard.
    pub shard_size: usize,
    /// Number of independent shards and trained weights per grid point.
    pub clients: usize,
    pub population_size: usize,
    pub seed: u64,
}

impl Default for Lemma3Options {
    fn default() -> Self {
        Self {
            n_mc: 10_000,
            n_matrices: 20,
            shard_size: 100,
            clients: 50,
            population_size: 20_000,
            seed: 0,
        }
    }
}

/// Empirical value of one union-bound piece next to its analytic bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermDiagnostic {
    pub empirical: f64,
    pub se: f64,
    pub analytic: f64,
    pub pass: bool,
}

impl TermDiagnostic {
    fn new(values: &[f64], analytic: f64) -> Self {
        let (empirical, se) = mean_se(values);
        Self {
            empirical,
            se,
            analytic,
            pass: empirical - 2.0 * se <= analytic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Row {
    pub params: CompressionParams,
    pub epsilon: EpsilonBreakdown,
    pub epsilon_tight: f64,
    pub estimate: f64,
    pub se: f64,
    pub pass: bool,
    pub terms: [TermDiagnostic; 4],
    /// `P(‖𝖠x‖ ≥ c₁‖x‖)` over fresh samples, against `2e^{−0.21m(c₁²−1)}`.
    pub sphere_tail: TermDiagnostic,
    pub matrices: usize,
    pub draws_per_matrix: usize,
}

/// Averages `D_𝖠` over `n_matrices` Gaussian matrices for every grid point.
/// Each grid point draws its own population, shards and trained weights from
/// `model`; the `B` of the grid point overrides the model's.
pub fn validate_lemma3(
    grid: &[CompressionParams],
    model: &BoundedDataModel,
    opts: &Lemma3Options,
) -> Result<Vec<Lemma3Row>> {
    if opts.n_mc < 100 || opts.n_matrices < 2 || opts.clients == 0 || opts.shard_size == 0 {
        return Err(Error::invalid(
            "lemma validation needs n_mc ≥ 100, n_matrices ≥ 2, clients ≥ 1, shard_size ≥ 1",
        ));
    }
    grid.iter()
        .enumerate()
        .map(|(g, params)| {
            params.validate()?;
            let model = BoundedDataModel {
                b: params.b,
                ..*model
            };
            let gseed = rng::child_seed(opts.seed, "lemma3-grid", g as u64);
            let population = model.sample(
                opts.population_size,
                rng::child_seed(gseed, "population", 0),
            )?;
            let clients: Vec<(Dataset, Hypothesis)> = (0..opts.clients)
                .map(|c| {
                    let shard =
                        model.sample(opts.shard_size, rng::child_seed(gseed, "shard", c as u64))?;
                    let w = unit_mean_direction(&shard);
                    Ok((shard, w))
                })
                .collect::<Result<_>>()?;
            let per_matrix: Vec<DaEstimate> = (0..opts.n_matrices)
                .map(|a| {
                    let jl = JlMatrix::sample(
                        model.dim,
                        params.m,
                        rng::child_seed(gseed, "matrix", a as u64),
                    )?;
                    let s = Sampler::new(&population, &clients, &jl, params)?;
                    Ok(s.run(opts.n_mc, rng::child_seed(gseed, "draws", a as u64)))
                })
                .collect::<Result<_>>()?;
            let eps = params.epsilon(false);
            let col =
                |f: &dyn Fn(&DaEstimate) -> f64| per_matrix.iter().map(f).collect::<Vec<f64>>();
            let (estimate, se) = mean_se(&col(&|e| e.estimate));
            let analytic = [eps.term1, eps.term2, eps.term3, eps.term4];
            let terms =
                std::array::from_fn(|i| TermDiagnostic::new(&col(&|e| e.terms[i]), analytic[i]));
            Ok(Lemma3Row {
                params: *params,
                epsilon: eps,
                epsilon_tight: params.epsilon(true).total,
                estimate,
                se,
                pass: estimate - 2.0 * se <= eps.total,
                terms,
                sphere_tail: TermDiagnostic::new(
                    &col(&|e| e.sphere_tail),
                    jl_norm_tail(params.m, params.c1),
                ),
                matrices: opts.n_matrices,
                draws_per_matrix: opts.n_mc,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(m: usize, k: usize, nu: f64) -> CompressionParams {
        CompressionParams {
            m,
            c1: 1.1,
            c2: 1.1,
            nu,
            theta: 0.2,
            b: 1.0,
            k,
            seed: 3,
        }
    }

    #[test]
    fn ball_samples_stay_inside() {
        let mut r = rng::stream(1);
        let mut v = vec![0.0; 7];
        for _ in 0..10_000 {
            fill_uniform_ball(&mut r, 0.3, &mut v);
            assert!(linalg::norm(&v) <= 0.3);
        }
    }

    #[test]
    fn one_dimensional_ball_is_uniform_interval() {
        let mut r = rng::stream(2);
        let mut v = [0.0];
        let n = 50_000;
        let mut abs = 0.0;
        let mut pos = 0;
        for _ in 0..n {
            fill_uniform_ball(&mut r, 2.0, &mut v);
            abs += v[0].abs();
            pos += usize::from(v[0] > 0.0);
        }
        assert!((abs / n as f64 - 1.0).abs() < 0.02);
        assert!((pos as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn vanishing_noise_recovers_projection() {
        let jl = JlMatrix::sample(6, 4, 9).unwrap();
        let w = Hypothesis::new(vec![0.1, -0.2, 0.0, 0.3, 0.1, 0.0]);
        let p = params(4, 1, 1e-12);
        let h = compress(&w, &[], 0, &jl, &p, 5).unwrap();
        let aw = jl.project(&w.w).unwrap();
        for (a, b) in h.hat_w_ii.iter().zip(&aw) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn fallback_centres_at_origin() {
        let jl = JlMatrix::identity(3);
        let w = Hypothesis::new(vec![5.0, 0.0, 0.0]);
        let p = params(3, 1, 0.4);
        let h = compress(&w, &[], 0, &jl, &p, 1).unwrap();
        assert!(linalg::norm(&h.hat_w_ii) <= 0.4);
    }

    #[test]
    fn identity_without_noise_reproduces_score() {
        let jl = JlMatrix::identity(3);
        let w = Hypothesis::new(vec![0.5, -0.5, 0.2]);
        let h = compress(&w, &[], 0, &jl, &params(3, 1, 1e-13), 0).unwrap();
        let x = [0.3, 0.1, -0.7];
        assert!((compressed_score(&x, &h).unwrap() - w.score(&x)).abs() < 1e-12);
    }

    #[test]
    fn peers_enter_verbatim() {
        let jl = JlMatrix::sample(3, 5, 4).unwrap();
        let w = Hypothesis::new(vec![0.2, 0.1, 0.0]);
        let peers = vec![
            Hypothesis::new(vec![1.0, 2.0, 3.0]),
            Hypothesis::new(vec![-1.0, 0.5, 0.0]),
        ];
        let h = compress(&w, &peers, 1, &jl, &params(5, 3, 0.2), 8).unwrap();
        let x = [0.4, -0.2, 0.9];
        let own = linalg::dot(&jl.project(&x).unwrap(), &h.hat_w_ii);
        let peer_sum: f64 = peers.iter().map(|p| p.score(&x)).sum();
        assert_eq!(compressed_score(&x, &h).unwrap(), (own + peer_sum) / 3.0);
    }

    #[test]
    fn rate_matches_bound_module() {
        let p = CompressionParams::refit(100, 10, 0.2, 1.0, 0);
        assert_eq!(
            p.rate(),
            dsvm_rate_term(&SvmBoundParams::refit(100, 10, 0.2, 1.0, 0.05))
        );
    }

    #[test]
    fn identity_map_has_zero_distortion() {
        let model = BoundedDataModel {
            dim: 4,
            ..Default::default()
        };
        let pop = model.sample(500, 1).unwrap();
        let shard = model.sample(50, 2).unwrap();
        let w = unit_mean_direction(&shard);
        let jl = JlMatrix::identity(4);
        let p = params(4, 1, 1e-12);
        let e = estimate_distortion_da(&pop, &shard, &w, &jl, &p, 2000).unwrap();
        assert_eq!(e.estimate, 0.0);
        assert_eq!(e.se, 0.0);
    }

    #[test]
    fn estimate_is_deterministic() {
        let model = BoundedDataModel {
            dim: 8,
            ..Default::default()
        };
        let pop = model.sample(300, 1).unwrap();
        let shard = model.sample(30, 2).unwrap();
        let w = unit_mean_direction(&shard);
        let jl = JlMatrix::sample(8, 6, 3).unwrap();
        let p = CompressionParams {
            m: 6,
            nu: 0.9,
            theta: 0.05,
            k: 1,
            ..params(6, 1, 0.9)
        };
        let a = estimate_distortion_da(&pop, &shard, &w, &jl, &p, 3000).unwrap();
        let b = estimate_distortion_da(&pop, &shard, &w, &jl, &p, 3000).unwrap();
        assert_eq!(a, b);
        assert!(a.estimate > 0.0);
        assert!(a.estimate <= a.terms.iter().sum::<f64>() + 1e-12);
    }

    #[test]
    fn data_model_respects_bound() {
        let d = BoundedDataModel::default().sample(2000, 7).unwrap();
        assert!(d.max_row_norm() <= 1.0 + 1e-12);
        let ms: f64 = d.rows().map(|(x, _)| linalg::dot(x, x)).sum::<f64>() / d.len() as f64;
        assert!((ms - 0.5).abs() < 0.05, "{ms}");
    }
}
