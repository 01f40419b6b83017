//! Distributed protocols and their risk bookkeeping.
//!
//! DSVM trains `K` clients once and averages their weights. FSGLD runs `T`
//! rounds of broadcast, one local SGLD step per client, and averaging. Every
//! client, round and replicate draws from its own seed, so results do not
//! depend on thread scheduling; parallel maps always collect in index order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    centralized_bound, centralized_tail_bound, dsvm_expected_bound, dsvm_tail_bound, RoundVariance,
    SvmBoundParams, VarianceTable,
};
use crate::datasets::{self, Dataset, ShardPlan};
use crate::error::{Error, Result};
use crate::learners::{
    self, empirical_risk, sgd_train_svm, Hypothesis, Loss, SgdParams, SgldStepParams, Surrogate,
};
use crate::linalg;
use crate::rng;
use crate::stats::mean_se;

/// Coordinate-wise mean. Inputs are summed in a canonical order, so any
/// permutation of `hs` gives a bit-identical result.
pub fn aggregate(hs: &[Hypothesis]) -> Result<Hypothesis> {
    let first = hs
        .first()
        .ok_or(Error::invalid("cannot aggregate zero hypotheses"))?;
    let d = first.dim();
    if let Some(h) = hs.iter().find(|h| h.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: h.dim(),
        });
    }
    let mut order: Vec<&Hypothesis> = hs.iter().collect();
    order.sort_by(|a, b| {
        a.w.iter()
            .zip(&b.w)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut w = vec![0.0; d];
    for h in order {
        linalg::axpy(1.0, &h.w, &mut w);
    }
    linalg::scale(1.0 / hs.len() as f64, &mut w);
    Ok(Hypothesis::new(w))
}

/// Outcome of one DSVM (or centralized, `K = 1`) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsvmRunReport {
    pub k: usize,
    pub n: usize,
    pub theta: f64,
    pub seed: u64,
    pub client_norms: Vec<f64>,
    pub client_train_risks: Vec<f64>,
    pub aggregate: Hypothesis,
    /// `𝓛(W̄) − (1/K)Σᵢ L̂_θ(Sᵢ, W̄)`.
    pub gen_gap_theta: f64,
    /// `(1/K)Σᵢ L̂(Sᵢ, Wᵢ)`.
    pub local_emp_risk: f64,
    /// `(1/K)Σᵢ L̂(Sᵢ, W̄)`.
    pub agg_emp_risk: f64,
    pub agg_emp_risk_theta: f64,
    pub pop_risk: f64,
    /// `agg_emp_risk − local_emp_risk`.
    pub delta_emp: f64,
}

/// Trains one client per shard and evaluates the averaged hypothesis.
/// Client `i` trains with seed `child_seed(seed, "client", i)`. With
/// `rescale_clients` each `Wᵢ` is first clipped to the unit ball.
pub fn run_dsvm_on_shards(
    shards: &[Dataset],
    test: &Dataset,
    theta: f64,
    sgd: &SgdParams,
    rescale_clients: bool,
    seed: u64,
) -> Result<DsvmRunReport> {
    if shards.is_empty() {
        return Err(Error::invalid("no client shards"));
    }
    if !(theta >= 0.0) {
        return Err(Error::invalid("margin θ must be nonnegative"));
    }
    let fits: Vec<learners::SvmFit> = shards
        .par_iter()
        .enumerate()
        .map(|(i, s)| sgd_train_svm(s, &sgd.with_seed(rng::child_seed(seed, "client", i as u64))))
        .collect::<Result<_>>()?;
    let clients: Vec<Hypothesis> = fits
        .iter()
        .map(|f| {
            if rescale_clients {
                f.hypothesis.clipped_to_unit_ball()
            } else {
                f.hypothesis.clone()
            }
        })
        .collect();
    let w_bar = aggregate(&clients)?;
    let k = shards.len() as f64;
    let mut local = 0.0;
    let mut agg = 0.0;
    let mut agg_theta = 0.0;
    for (s, w) in shards.iter().zip(&clients) {
        local += empirical_risk(s, w, Loss::ZeroOne)?;
        agg += empirical_risk(s, &w_bar, Loss::ZeroOne)?;
        agg_theta += empirical_risk(s, &w_bar, Loss::Margin(theta))?;
    }
    let (local, agg, agg_theta) = (local / k, agg / k, agg_theta / k);
    let pop = learners::population_risk_estimate(test, &w_bar)?;
    Ok(DsvmRunReport {
        k: shards.len(),
        n: shards[0].len(),
        theta,
        seed,
        client_norms: clients.iter().map(Hypothesis::norm).collect(),
        client_train_risks: fits.iter().map(|f| f.final_train_risk()).collect(),
        aggregate: w_bar,
        gen_gap_theta: pop - agg_theta,
        local_emp_risk: local,
        agg_emp_risk: agg,
        agg_emp_risk_theta: agg_theta,
        pop_risk: pop,
        delta_emp: agg - local,
    })
}

/// Draws `S` of size `nK` from `pool` (stream `"sample"`), gives each client
/// `n` points drawn uniformly from `S` (stream `"shards"`), and runs DSVM.
pub fn run_dsvm(
    pool: &Dataset,
    test: &Dataset,
    k: usize,
    n: usize,
    theta: f64,
    sgd: &SgdParams,
    seed: u64,
) -> Result<DsvmRunReport> {
    run_dsvm_with(pool, test, k, n, theta, sgd, false, seed)
}

#[allow(clippy::too_many_arguments)]
fn run_dsvm_with(
    pool: &Dataset,
    test: &Dataset,
    k: usize,
    n: usize,
    theta: f64,
    sgd: &SgdParams,
    rescale_clients: bool,
    seed: u64,
) -> Result<DsvmRunReport> {
    if k == 0 || n == 0 {
        return Err(Error::invalid("DSVM needs K ≥ 1 and n ≥ 1"));
    }
    let s = datasets::subsample(pool, n * k, rng::child_seed(seed, "sample", 0))?;
    let shards = datasets::shard(
        &s,
        &ShardPlan::new(k, n, rng::child_seed(seed, "shards", 0)),
    )?;
    run_dsvm_on_shards(&shards, test, theta, sgd, rescale_clients, seed)
}

/// One model trained on `N` samples; identical to `run_dsvm` with `K = 1`.
pub fn run_centralized(
    pool: &Dataset,
    test: &Dataset,
    n_total: usize,
    theta: f64,
    sgd: &SgdParams,
    seed: u64,
) -> Result<DsvmRunReport> {
    run_dsvm(pool, test, 1, n_total, theta, sgd, seed)
}

/// Estimate of `𝓛(E[W₁]) − E[L̂(S₁, W₁)]`, the large-`K` limit of `ΔL̂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitGap {
    pub estimate: f64,
    pub se: f64,
    pub replicas: usize,
}

/// Trains `replicas` clients on independent shards of `pool` and compares the
/// population risk of their mean weight with their mean own-shard risk. The
/// standard error is a leave-one-out jackknife.
pub fn estimate_limit_gap(
    pool: &Dataset,
    test: &Dataset,
    n: usize,
    sgd: &SgdParams,
    replicas: usize,
    seed: u64,
) -> Result<LimitGap> {
    if replicas < 2 {
        return Err(Error::invalid("limit estimate needs at least 2 replicas"));
    }
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let shards = datasets::shard(
        pool,
        &ShardPlan::new(replicas, n, rng::child_seed(seed, "limit-shards", 0)),
    )?;
    let fits: Vec<(Vec<f64>, f64)> = shards
        .par_iter()
        .enumerate()
        .map(|(r, s)| {
            let fit = sgd_train_svm(
                s,
                &sgd.with_seed(rng::child_seed(seed, "limit-client", r as u64)),
            )?;
            let emp = empirical_risk(s, &fit.hypothesis, Loss::ZeroOne)?;
            let scores: Vec<f64> = test.rows().map(|(x, _)| fit.hypothesis.score(x)).collect();
            Ok((scores, emp))
        })
        .collect::<Result<_>>()?;
    let r = replicas as f64;
    let mut total = vec![0.0; test.len()];
    for (s, _) in &fits {
        linalg::axpy(1.0, s, &mut total);
    }
    let emp_total: f64 = fits.iter().map(|(_, e)| e).sum();
    let risk_of = |scores: &dyn Fn(usize) -> f64| {
        test.labels()
            .iter()
            .enumerate()
            .filter(|(j, y)| *y * scores(*j) < 0.0)
            .count() as f64
            / test.len() as f64
    };
    let estimate = risk_of(&|j| total[j] / r) - emp_total / r;
    let loo: Vec<f64> = fits
        .iter()
        .map(|(s, e)| risk_of(&|j| (total[j] - s[j]) / (r - 1.0)) - (emp_total - e) / (r - 1.0))
        .collect();
    let mean = loo.iter().sum::<f64>() / r;
    let se = ((r - 1.0) / r * loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt();
    Ok(LimitGap {
        estimate,
        se,
        replicas,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinalChoice {
    /// `(W̄₁ + ⋯ + W̄_T)/T`.
    #[default]
    Polyak,
    LastIterate,
}

/// Round-wise step sizes and inverse temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FsgldSchedule {
    pub eta: Vec<f64>,
    pub beta: Vec<f64>,
}

impl FsgldSchedule {
    pub fn constant(rounds: usize, eta: f64, beta: f64) -> Self {
        Self {
            eta: vec![eta; rounds],
            beta: vec![beta; rounds],
        }
    }

    pub fn rounds(&self) -> usize {
        self.eta.len()
    }

    fn validate(&self) -> Result<()> {
        if self.eta.is_empty() || self.eta.len() != self.beta.len() {
            return Err(Error::invalid(
                "schedule needs T ≥ 1 with one (η, β) per round",
            ));
        }
        if self.eta.iter().any(|e| !(*e > 0.0)) || self.beta.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::invalid("schedule entries must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FsgldConfig {
    /// Minibatch size `b`; each shard of size `n = m·b` is split into `m` batches.
    pub batch: usize,
    pub schedule: FsgldSchedule,
    pub init_std: f64,
    pub final_choice: FinalChoice,
    pub seed: u64,
}

/// Everything an FSGLD run records. Minibatch `j_t` is shared by all clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsgldTrace {
    pub k: usize,
    pub n: usize,
    pub batch: usize,
    pub minibatches: usize,
    pub schedule: FsgldSchedule,
    /// `j_t` for `t = 1..T`, zero-based.
    pub minibatch_of_round: Vec<usize>,
    /// `W̄₀, …, W̄_T`.
    pub aggregates: Vec<Hypothesis>,
    /// `∇ℓ̂(S_{i,j_t}, W̄_{t−1})`, indexed `[t − 1][i]`.
    pub gradients: Vec<Vec<Vec<f64>>>,
    /// Per-sample gradient scatter divided by `b`, indexed `[t − 1][i]`.
    pub scatter: Vec<Vec<f64>>,
    pub final_hypothesis: Hypothesis,
}

impl FsgldTrace {
    /// `𝒯_{i,j}` as one-based round indices (identical for every client).
    pub fn rounds_of(&self, j: usize) -> Vec<usize> {
        self.minibatch_of_round
            .iter()
            .enumerate()
            .filter(|(_, &jt)| jt == j)
            .map(|(t, _)| t + 1)
            .collect()
    }

    fn table(&self, variance: impl Fn(usize, usize) -> f64) -> VarianceTable {
        VarianceTable {
            cells: (0..self.k)
                .map(|i| {
                    (0..self.minibatches)
                        .map(|j| {
                            self.rounds_of(j)
                                .into_iter()
                                .map(|t| RoundVariance {
                                    round: t,
                                    beta: self.schedule.beta[t - 1],
                                    eta: self.schedule.eta[t - 1],
                                    variance: variance(t - 1, i),
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// Variance table from the within-run scatter proxy.
    pub fn within_run_variances(&self) -> VarianceTable {
        self.table(|t, i| self.scatter[t][i])
    }
}

/// Cyclic `j_t = (t − 1) mod m`, zero-based.
pub fn cyclic_schedule(rounds: usize, minibatches: usize) -> Vec<usize> {
    (0..rounds).map(|t| t % minibatches).collect()
}

fn batch_gradient_and_scatter(
    batch: &Dataset,
    w: &[f64],
    surrogate: &dyn Surrogate,
) -> (Vec<f64>, f64) {
    let d = w.len();
    let mut grads = Vec::with_capacity(batch.len());
    let mut mean = vec![0.0; d];
    for (x, y) in batch.rows() {
        let mut g = vec![0.0; d];
        surrogate.grad(x, y, w, &mut g);
        linalg::axpy(1.0, &g, &mut mean);
        grads.push(g);
    }
    let b = batch.len() as f64;
    linalg::scale(1.0 / b, &mut mean);
    let ss: f64 = grads
        .iter()
        .map(|g| {
            g.iter()
                .zip(&mean)
                .map(|(a, m)| (a - m).powi(2))
                .sum::<f64>()
        })
        .sum();
    (mean, ss / (b - 1.0).max(1.0) / b)
}

/// Runs FSGLD on `shards` (one per client, equal sizes divisible by `batch`).
pub fn run_fsgld(
    shards: &[Dataset],
    cfg: &FsgldConfig,
    surrogate: &dyn Surrogate,
) -> Result<FsgldTrace> {
    cfg.schedule.validate()?;
    let k = shards.len();
    let first = shards.first().ok_or(Error::invalid("no client shards"))?;
    let (n, d) = (first.len(), first.dim());
    if shards.iter().any(|s| s.len() != n || s.dim() != d) {
        return Err(Error::invalid("FSGLD shards must share size and dimension"));
    }
    if cfg.batch == 0 || n == 0 || n % cfg.batch != 0 {
        return Err(Error::invalid(format!(
            "shard size {n} is not a positive multiple of batch size {}",
            cfg.batch
        )));
    }
    if !(cfg.init_std >= 0.0) {
        return Err(Error::invalid("init_std must be nonnegative"));
    }
    let m = n / cfg.batch;
    let batches: Vec<Vec<Dataset>> = shards
        .iter()
        .map(|s| {
            (0..m)
                .map(|j| s.slice(j * cfg.batch, (j + 1) * cfg.batch))
                .collect()
        })
        .collect();
    let rounds = cfg.schedule.rounds();
    let schedule = cyclic_schedule(rounds, m);

    let mut w0 = vec![0.0; d];
    rng::fill_standard_normal(
        &mut rng::stream(rng::child_seed(cfg.seed, "init", 0)),
        &mut w0,
    );
    linalg::scale(cfg.init_std, &mut w0);
    let mut aggregates = vec![Hypothesis::new(w0)];
    let mut gradients = Vec::with_capacity(rounds);
    let mut scatter = Vec::with_capacity(rounds);
    for (t, &j) in schedule.iter().enumerate() {
        let prev = aggregates.last().expect("W̄₀ present").clone();
        let step: Vec<(Hypothesis, Vec<f64>, f64)> = batches
            .par_iter()
            .enumerate()
            .map(|(i, client)| {
                let (g, sc) = batch_gradient_and_scatter(&client[j], &prev.w, surrogate);
                if !linalg::all_finite(&g) {
                    return Err(Error::Divergence("FSGLD gradient"));
                }
                let params = SgldStepParams {
                    eta: cfg.schedule.eta[t],
                    beta: cfg.schedule.beta[t],
                    seed: rng::path_seed(cfg.seed, "sgld", &[t as u64, i as u64]),
                };
                Ok((learners::sgld_step_with_gradient(&prev, &g, &params), g, sc))
            })
            .collect::<Result<_>>()?;
        let locals: Vec<Hypothesis> = step.iter().map(|(h, _, _)| h.clone()).collect();
        let next = aggregate(&locals)?;
        if !linalg::all_finite(&next.w) {
            return Err(Error::Divergence("FSGLD aggregate"));
        }
        gradients.push(step.iter().map(|(_, g, _)| g.clone()).collect());
        scatter.push(step.iter().map(|(_, _, s)| *s).collect());
        aggregates.push(next);
    }
    let final_hypothesis = match cfg.final_choice {
        FinalChoice::LastIterate => aggregates.last().expect("T ≥ 1").clone(),
        FinalChoice::Polyak => {
            let mut w = vec![0.0; d];
            for a in &aggregates[1..] {
                linalg::axpy(1.0, &a.w, &mut w);
            }
            linalg::scale(1.0 / rounds as f64, &mut w);
            Hypothesis::new(w)
        }
    };
    Ok(FsgldTrace {
        k,
        n,
        batch: cfg.batch,
        minibatches: m,
        schedule: cfg.schedule.clone(),
        minibatch_of_round: schedule,
        aggregates,
        gradients,
        scatter,
        final_hypothesis,
    })
}

/// Variance table estimated across replicate traces that share `K`, the
/// schedule and the minibatch layout: `(1/(R−1)) Σ_r ‖g_r − ḡ‖²` per
/// `(round, client)`.
pub fn replica_variances(traces: &[FsgldTrace]) -> Result<VarianceTable> {
    let first = traces.first().ok_or(Error::invalid("no traces"))?;
    if traces.len() < 2 {
        return Err(Error::invalid("replica variances need at least 2 traces"));
    }
    if traces.iter().any(|t| {
        t.k != first.k
            || t.minibatches != first.minibatches
            || t.schedule != first.schedule
            || t.minibatch_of_round != first.minibatch_of_round
    }) {
        return Err(Error::invalid(
            "replica traces must share K, schedule and minibatch layout",
        ));
    }
    let r = traces.len() as f64;
    let rounds = first.schedule.rounds();
    let var: Vec<Vec<f64>> = (0..rounds)
        .map(|t| {
            (0..first.k)
                .map(|i| {
                    let d = first.gradients[t][i].len();
                    let mut mean = vec![0.0; d];
                    for tr in traces {
                        linalg::axpy(1.0 / r, &tr.gradients[t][i], &mut mean);
                    }
                    traces
                        .iter()
                        .map(|tr| {
                            tr.gradients[t][i]
                                .iter()
                                .zip(&mean)
                                .map(|(g, m)| (g - m).powi(2))
                                .sum::<f64>()
                        })
                        .sum::<f64>()
                        / (r - 1.0)
                })
                .collect()
        })
        .collect();
    Ok(first.table(|t, i| var[t][i]))
}

/// One `K` cell of the FSGLD experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsgldCell {
    pub k: usize,
    pub n: usize,
    pub replicas: usize,
    pub gaps: Vec<f64>,
    pub mean_gap: f64,
    pub se_gap: f64,
    pub mean_pop_risk: f64,
    pub bound: f64,
    pub bound_within_run: f64,
    pub bound_label: String,
}

/// Runs `replicas` independent FSGLD trainings with `K` clients of `n`
/// samples drawn from `pool`, measures `𝓛(W̄) − L̂(S_{1:K}, W̄)` with the 0-1
/// loss, and evaluates the FSGLD bound from replica variances.
#[allow(clippy::too_many_arguments)]
pub fn fsgld_cell(
    pool: &Dataset,
    test: &Dataset,
    k: usize,
    n: usize,
    cfg: &FsgldConfig,
    surrogate: &dyn Surrogate,
    replicas: usize,
    sigma: f64,
) -> Result<FsgldCell> {
    let runs: Vec<(FsgldTrace, f64, f64)> = (0..replicas)
        .map(|r| {
            let rseed = rng::path_seed(cfg.seed, "fsgld-replica", &[k as u64, r as u64]);
            let shards = datasets::shard(
                pool,
                &ShardPlan::new(k, n, rng::child_seed(rseed, "shards", 0)),
            )?;
            let trace = run_fsgld(
                shards.as_slice(),
                &FsgldConfig {
                    seed: rseed,
                    ..cfg.clone()
                },
                surrogate,
            )?;
            let h = &trace.final_hypothesis;
            let mut emp = 0.0;
            for s in &shards {
                emp += empirical_risk(s, h, Loss::ZeroOne)?;
            }
            emp /= k as f64;
            let pop = learners::population_risk_estimate(test, h)?;
            Ok((trace, pop - emp, pop))
        })
        .collect::<Result<_>>()?;
    let gaps: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let (mean_gap, se_gap) = mean_se(&gaps);
    let mean_pop_risk = runs.iter().map(|r| r.2).sum::<f64>() / replicas as f64;
    let traces: Vec<FsgldTrace> = runs.into_iter().map(|r| r.0).collect();
    let table = replica_variances(&traces)?;
    let within: Vec<f64> = traces
        .iter()
        .map(|t| crate::bounds::fsgld_bound(&t.within_run_variances(), sigma, cfg.batch, n))
        .collect::<Result<_>>()?;
    Ok(FsgldCell {
        k,
        n,
        replicas,
        gaps,
        mean_gap,
        se_gap,
        mean_pop_risk,
        bound: crate::bounds::fsgld_bound(&table, sigma, cfg.batch, n)?,
        bound_within_run: within.iter().sum::<f64>() / replicas as f64,
        bound_label: if k == 1 {
            "single-client (Wang-form)".to_string()
        } else {
            "federated".to_string()
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Centralized,
    Dsvm,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Centralized => "centralized",
            ExperimentKind::Dsvm => "dsvm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub k_values: Vec<usize>,
    pub n_values: Vec<usize>,
    pub repeats: usize,
    pub master_seed: u64,
    /// Margin used in the measured gap.
    pub theta: f64,
    /// Margin used in the bound columns.
    pub bound_theta: f64,
    pub delta: f64,
    pub sigma: f64,
    pub include_centralized: bool,
    pub rescale_clients: bool,
    pub sgd: SgdParams,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k_values: vec![1, 5, 10, 25, 50],
            n_values: vec![100],
            repeats: 10,
            master_seed: 0,
            theta: 0.0,
            bound_theta: 0.2,
            delta: 0.05,
            sigma: 1.0,
            include_centralized: true,
            rescale_clients: false,
            sgd: SgdParams::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.n_values.is_empty() || self.repeats == 0 {
            return Err(Error::invalid(
                "sweep needs K values, n values and repeats ≥ 1",
            ));
        }
        if self.k_values.contains(&0) || self.n_values.contains(&0) {
            return Err(Error::invalid("K and n values must be positive"));
        }
        if !(self.theta >= 0.0)
            || !(self.bound_theta > 0.0)
            || !(self.delta > 0.0 && self.delta < 1.0)
        {
            return Err(Error::invalid(
                "sweep needs θ ≥ 0, bound θ > 0 and δ in (0, 1)",
            ));
        }
        Ok(())
    }

    /// Seed shared by the distributed and centralized runs of one cell.
    pub fn cell_seed(&self, k: usize, n: usize, repeat: usize) -> u64 {
        rng::path_seed(
            self.master_seed,
            "cell",
            &[k as u64, n as u64, repeat as u64],
        )
    }
}

/// One CSV row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub experiment: ExperimentKind,
    pub k: usize,
    pub n: usize,
    pub repeat: usize,
    pub seed: u64,
    pub gen_gap: f64,
    pub emp_risk_local: f64,
    pub emp_risk_agg: f64,
    pub emp_risk_agg_margin: f64,
    pub pop_risk: f64,
    pub delta_emp: f64,
    pub bound_expected: Option<f64>,
    pub bound_tail: Option<f64>,
    pub bound_centralized: Option<f64>,
}

impl SweepRow {
    fn from_report(
        experiment: ExperimentKind,
        k: usize,
        n: usize,
        repeat: usize,
        r: &DsvmRunReport,
    ) -> Self {
        Self {
            experiment,
            k,
            n,
            repeat,
            seed: r.seed,
            gen_gap: r.gen_gap_theta,
            emp_risk_local: r.local_emp_risk,
            emp_risk_agg: r.agg_emp_risk,
            emp_risk_agg_margin: r.agg_emp_risk_theta,
            pop_risk: r.pop_risk,
            delta_emp: r.delta_emp,
            bound_expected: None,
            bound_tail: None,
            bound_centralized: None,
        }
    }

    fn sort_key(&self) -> (ExperimentKind, usize, usize, usize) {
        (self.experiment, self.k, self.n, self.repeat)
    }
}

/// Bound columns for one `(K, n)` cell at feature bound `b`.
pub fn bound_columns(cfg: &SweepConfig, k: usize, n: usize, b: f64) -> Result<[f64; 4]> {
    let p = SvmBoundParams::refit(n, k, cfg.bound_theta, b, cfg.delta).with_sigma(cfg.sigma);
    Ok([
        dsvm_expected_bound(&p)?,
        dsvm_tail_bound(&p)?,
        centralized_bound(n, k, cfg.bound_theta, b, cfg.sigma)?,
        centralized_tail_bound(n, k, cfg.bound_theta, b, cfg.delta, cfg.sigma)?,
    ])
}

/// Runs every `(K, n, repeat)` cell, plus the centralized counterpart on the
/// same `nK` samples when enabled. Rows come back sorted by
/// `(experiment, K, n, repeat)`. `b` is the feature-norm bound used in the
/// bound columns.
pub fn sweep(pool: &Dataset, test: &Dataset, cfg: &SweepConfig, b: f64) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &k in &cfg.k_values {
        for &n in &cfg.n_values {
            for repeat in 0..cfg.repeats {
                jobs.push((ExperimentKind::Dsvm, k, n, repeat));
                if cfg.include_centralized {
                    jobs.push((ExperimentKind::Centralized, k, n, repeat));
                }
            }
        }
    }
    let mut rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(kind, k, n, repeat)| {
            let seed = cfg.cell_seed(k, n, repeat);
            let bounds = bound_columns(cfg, k, n, b)?;
            let mut row = match kind {
                ExperimentKind::Dsvm => {
                    let r = run_dsvm_with(
                        pool,
                        test,
                        k,
                        n,
                        cfg.theta,
                        &cfg.sgd,
                        cfg.rescale_clients,
                        seed,
                    )?;
                    let mut row = SweepRow::from_report(kind, k, n, repeat, &r);
                    row.bound_centralized = Some(bounds[2]);
                    row
                }
                ExperimentKind::Centralized => {
                    let r = run_dsvm_with(
                        pool,
                        test,
                        1,
                        n * k,
                        cfg.theta,
                        &cfg.sgd,
                        cfg.rescale_clients,
                        seed,
                    )?;
                    SweepRow::from_report(kind, k, n, repeat, &r)
                }
            };
            let (e, t) = match kind {
                ExperimentKind::Dsvm => (bounds[0], bounds[1]),
                ExperimentKind::Centralized => (bounds[2], bounds[3]),
            };
            row.bound_expected = Some(e);
            row.bound_tail = Some(t);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(SweepRow::sort_key);
    Ok(rows)
}

/// Mean and standard error of each metric over the repeats of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub experiment: ExperimentKind,
    pub k: usize,
    pub n: usize,
    pub repeats: usize,
    pub mean: SweepRow,
    pub se: SweepRow,
}

pub fn summarize(rows: &[SweepRow]) -> Vec<CellSummary> {
    let mut keys: Vec<(ExperimentKind, usize, usize)> =
        rows.iter().map(|r| (r.experiment, r.k, r.n)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(experiment, k, n)| {
            let cell: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| (r.experiment, r.k, r.n) == (experiment, k, n))
                .collect();
            let stat = |f: &dyn Fn(&SweepRow) -> f64| {
                mean_se(&cell.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            let opt = |f: &dyn Fn(&SweepRow) -> Option<f64>| -> (Option<f64>, Option<f64>) {
                let vals: Option<Vec<f64>> = cell.iter().map(|r| f(r)).collect();
                match vals {
                    Some(v) => {
                        let (m, s) = mean_se(&v);
                        (Some(m), Some(s))
                    }
                    None => (None, None),
                }
            };
            let gen = stat(&|r| r.gen_gap);
            let local = stat(&|r| r.emp_risk_local);
            let agg = stat(&|r| r.emp_risk_agg);
            let margin = stat(&|r| r.emp_risk_agg_margin);
            let pop = stat(&|r| r.pop_risk);
            let delta = stat(&|r| r.delta_emp);
            let be = opt(&|r| r.bound_expected);
            let bt = opt(&|r| r.bound_tail);
            let bc = opt(&|r| r.bound_centralized);
            let make = |use_se: bool| {
                let pick = |p: (f64, f64)| if use_se { p.1 } else { p.0 };
                let pick_opt = |p: (Option<f64>, Option<f64>)| if use_se { p.1 } else { p.0 };
                SweepRow {
                    experiment,
                    k,
                    n,
                    repeat: cell.len(),
                    seed: 0,
                    gen_gap: pick(gen),
                    emp_risk_local: pick(local),
                    emp_risk_agg: pick(agg),
                    emp_risk_agg_margin: pick(margin),
                    pop_risk: pick(pop),
                    delta_emp: pick(delta),
                    bound_expected: pick_opt(be),
                    bound_tail: pick_opt(bt),
                    bound_centralized: pick_opt(bc),
                }
            };
            CellSummary {
                experiment,
                k,
                n,
                repeats: cell.len(),
                mean: make(false),
                se: make(true),
            }
        })
        .collect()
}
