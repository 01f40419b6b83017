//! Closed-form generalization bounds.
//!
//! The DSVM bounds are the explicit expressions behind the big-O statements:
//! a rate term `m·ln((c₂+ν)/ν)` from the JL compression, and a four-term
//! distortion `ε`. All logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs of the DSVM bound. Build with [`SvmBoundParams::refit`] to get the
/// default `(m, c₁, c₂, ν)` choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmBoundParams {
    pub n: usize,
    pub k: usize,
    /// Bound on `‖X‖`.
    pub b: f64,
    pub theta: f64,
    pub delta: f64,
    pub m: usize,
    pub c1: f64,
    pub c2: f64,
    pub nu: f64,
    /// Subgaussian parameter of the loss.
    pub sigma: f64,
}

impl SvmBoundParams {
    /// Default choice: `m = ⌈112 (B/(Kθ))² ln(nK√K)⌉`,
    /// `c₁ = c₂ = sqrt(K²θ²/(20B²) + 1)`, `ν = 1/(2c₁)`, `σ = 1`.
    pub fn refit(n: usize, k: usize, theta: f64, b: f64, delta: f64) -> Self {
        let (nf, kf) = (n as f64, k as f64);
        let ratio = b / (kf * theta);
        let m = (112.0 * ratio * ratio * (nf * kf * kf.sqrt()).ln())
            .ceil()
            .max(1.0) as usize;
        let c = ((kf * theta).powi(2) / (20.0 * b * b) + 1.0).sqrt();
        Self {
            n,
            k,
            b,
            theta,
            delta,
            m,
            c1: c,
            c2: c,
            nu: 1.0 / (2.0 * c),
            sigma: 1.0,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.n >= 1
            && self.k >= 1
            && self.m >= 1
            && self.b > 0.0
            && self.theta > 0.0
            && self.c1 >= 1.0
            && self.c2 >= 1.0
            && self.nu > 0.0
            && self.sigma > 0.0
            && self.b.is_finite()
            && self.nu.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid bound parameters: {self:?}"
            )))
        }
    }

    fn validate_delta(&self) -> Result<()> {
        if self.delta > 0.0 && self.delta < 1.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "δ = {} must lie in (0, 1)",
                self.delta
            )))
        }
    }
}

/// The four terms of the distortion level `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBreakdown {
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
    pub term4: f64,
    pub total: f64,
    /// Natural log of `term2` before any tight-mode zeroing.
    pub log_term2: f64,
}

/// `t = Kθ/(4c₁νB)`; the ball-noise term vanishes when `t ≥ 1`.
pub fn ball_noise_threshold(p: &SvmBoundParams) -> f64 {
    p.k as f64 * p.theta / (4.0 * p.c1 * p.nu * p.b)
}

/// `ε = 8e^{−(m/7)(Kθ/4B)²} + (2mν^m/√π)e^{−((m+1)/2)t²} + 4e^{−0.21m(c₁²−1)} + 4e^{−0.21m(c₂²−1)}`.
///
/// The second term is assembled in log space. With `tight` set it is replaced
/// by 0 when `t ≥ 1`, where the underlying probability is exactly zero.
pub fn epsilon_terms(p: &SvmBoundParams, tight: bool) -> EpsilonBreakdown {
    let (m, k) = (p.m as f64, p.k as f64);
    let a = k * p.theta / (4.0 * p.b);
    let term1 = 8.0 * (-(m / 7.0) * a * a).exp();
    let t = ball_noise_threshold(p);
    let log_term2 =
        (2.0 * m / std::f64::consts::PI.sqrt()).ln() + m * p.nu.ln() - (m + 1.0) / 2.0 * t * t;
    let term2 = if tight && t >= 1.0 {
        0.0
    } else {
        log_term2.exp()
    };
    let term3 = 4.0 * (-0.21 * m * (p.c1 * p.c1 - 1.0)).exp();
    let term4 = 4.0 * (-0.21 * m * (p.c2 * p.c2 - 1.0)).exp();
    EpsilonBreakdown {
        term1,
        term2,
        term3,
        term4,
        total: term1 + term2 + term3 + term4,
        log_term2,
    }
}

/// Rate of the compressed hypothesis, `m·ln((c₂+ν)/ν)`.
pub fn dsvm_rate_term(p: &SvmBoundParams) -> f64 {
    p.m as f64 * (p.c2 / p.nu).ln_1p()
}

/// Every intermediate quantity of one DSVM bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmBoundReport {
    pub params: SvmBoundParams,
    pub rate: f64,
    pub epsilon: EpsilonBreakdown,
    pub expected: f64,
    pub tail: Option<f64>,
}

/// `sqrt(2σ²·rate/n) + ε`.
pub fn dsvm_expected_bound(p: &SvmBoundParams) -> Result<f64> {
    p.validate()?;
    let rate = dsvm_rate_term(p);
    Ok((2.0 * p.sigma * p.sigma * rate / p.n as f64).sqrt() + epsilon_terms(p, false).total)
}

/// `sqrt((2·rate + 2 ln(1/δ))σ²/n) + ε`.
pub fn dsvm_tail_bound(p: &SvmBoundParams) -> Result<f64> {
    p.validate()?;
    p.validate_delta()?;
    let rate = dsvm_rate_term(p);
    let inner = (2.0 * rate + 2.0 * (1.0 / p.delta).ln()) * p.sigma * p.sigma / p.n as f64;
    Ok(inner.sqrt() + epsilon_terms(p, false).total)
}

pub fn dsvm_report(p: &SvmBoundParams, with_tail: bool) -> Result<SvmBoundReport> {
    Ok(SvmBoundReport {
        params: *p,
        rate: dsvm_rate_term(p),
        epsilon: epsilon_terms(p, false),
        expected: dsvm_expected_bound(p)?,
        tail: if with_tail {
            Some(dsvm_tail_bound(p)?)
        } else {
            None
        },
    })
}

/// The same bounds for a single learner holding all `nK` samples.
pub fn centralized_params(n: usize, k: usize, theta: f64, b: f64, delta: f64) -> SvmBoundParams {
    SvmBoundParams::refit(n * k, 1, theta, b, delta)
}

pub fn centralized_bound(n: usize, k: usize, theta: f64, b: f64, sigma: f64) -> Result<f64> {
    dsvm_expected_bound(&centralized_params(n, k, theta, b, 0.5).with_sigma(sigma))
}

pub fn centralized_tail_bound(
    n: usize,
    k: usize,
    theta: f64,
    b: f64,
    delta: f64,
    sigma: f64,
) -> Result<f64> {
    dsvm_tail_bound(&centralized_params(n, k, theta, b, delta).with_sigma(sigma))
}

/// Grid specification for [`optimize_svm_bound`]. Multipliers are applied to the
/// default parameters; every grid includes multiplier 1 so the default choice
/// is always a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeGrid {
    pub m_factors: Vec<f64>,
    pub c_excess_factors: Vec<f64>,
    pub nu_factors: Vec<f64>,
    pub sweeps: usize,
}

impl Default for OptimizeGrid {
    fn default() -> Self {
        let geom = |lo: f64, hi: f64, steps: usize| -> Vec<f64> {
            let mut v: Vec<f64> = (0..=steps)
                .map(|i| lo * (hi / lo).powf(i as f64 / steps as f64))
                .collect();
            v.push(1.0);
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        Self {
            m_factors: geom(0.05, 4.0, 40),
            c_excess_factors: geom(0.1, 20.0, 30),
            nu_factors: geom(0.05, 20.0, 30),
            sweeps: 4,
        }
    }
}

/// Which bound to minimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Expected,
    Tail,
}

fn eval_kind(p: &SvmBoundParams, kind: BoundKind) -> Result<f64> {
    match kind {
        BoundKind::Expected => dsvm_expected_bound(p),
        BoundKind::Tail => dsvm_tail_bound(p),
    }
}

/// Coordinate descent over `(m, c₁, c₂, ν)` starting from the default choice.
/// Any feasible parameter tuple yields a valid bound, so the minimum over the
/// grid is one too. Deterministic for a given grid.
pub fn optimize_svm_bound(
    n: usize,
    k: usize,
    theta: f64,
    b: f64,
    delta: f64,
    kind: BoundKind,
    grid: &OptimizeGrid,
) -> Result<(SvmBoundParams, f64)> {
    let base = SvmBoundParams::refit(n, k, theta, b, delta);
    let mut best = base;
    let mut best_val = eval_kind(&best, kind)?;
    let base_excess = (base.c1 - 1.0).max(1e-6);
    for _ in 0..grid.sweeps.max(1) {
        let start_val = best_val;
        for &f in &grid.m_factors {
            let mut cand = best;
            cand.m = ((base.m as f64) * f).round().max(1.0) as usize;
            try_candidate(&cand, kind, &mut best, &mut best_val)?;
        }
        for &f in &grid.c_excess_factors {
            let mut cand = best;
            cand.c1 = 1.0 + base_excess * f;
            try_candidate(&cand, kind, &mut best, &mut best_val)?;
        }
        for &f in &grid.c_excess_factors {
            let mut cand = best;
            cand.c2 = 1.0 + base_excess * f;
            try_candidate(&cand, kind, &mut best, &mut best_val)?;
        }
        for &f in &grid.nu_factors {
            let mut cand = best;
            cand.nu = base.nu * f;
            try_candidate(&cand, kind, &mut best, &mut best_val)?;
        }
        if best_val >= start_val {
            break;
        }
    }
    Ok((best, best_val))
}

fn try_candidate(
    cand: &SvmBoundParams,
    kind: BoundKind,
    best: &mut SvmBoundParams,
    best_val: &mut f64,
) -> Result<()> {
    let v = eval_kind(cand, kind)?;
    if v < *best_val {
        *best = *cand;
        *best_val = v;
    }
    Ok(())
}

/// Inputs of the bound for a deterministic, `𝔏`-Lipschitz local algorithm with
/// hypothesis variance `σ_W²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzBoundParams {
    pub lipschitz: f64,
    pub sigma: f64,
    pub hypothesis_variance: f64,
    pub n: usize,
    pub k: usize,
}

/// `min(2·∛(2𝔏σ²σ_W²/(nK²)), 2𝔏σ_W²/K²)`.
pub fn lipschitz_expected_bound(p: &LipschitzBoundParams) -> Result<f64> {
    if !(p.lipschitz > 0.0)
        || !(p.sigma > 0.0)
        || !(p.hypothesis_variance >= 0.0)
        || p.n == 0
        || p.k == 0
    {
        return Err(Error::invalid(format!(
            "invalid Lipschitz bound parameters: {p:?}"
        )));
    }
    let k2 = (p.k as f64).powi(2);
    let cube = 2.0
        * (2.0 * p.lipschitz * p.sigma * p.sigma * p.hypothesis_variance / (p.n as f64 * k2))
            .cbrt();
    let direct = 2.0 * p.lipschitz * p.hypothesis_variance / k2;
    Ok(cube.min(direct))
}

/// One round's contribution to the FSGLD bound: round index, `β_t`, `η_t` and
/// the gradient variance estimate at `W̄_{t−1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundVariance {
    pub round: usize,
    pub beta: f64,
    pub eta: f64,
    pub variance: f64,
}

/// Gradient-variance table indexed by `(client, minibatch)`; each cell lists the
/// rounds in `𝒯_{i,j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTable {
    pub cells: Vec<Vec<Vec<RoundVariance>>>,
}

impl VarianceTable {
    pub fn clients(&self) -> usize {
        self.cells.len()
    }
}

fn check_variance_table(table: &VarianceTable) -> Result<()> {
    for (i, client) in table.cells.iter().enumerate() {
        for (j, cell) in client.iter().enumerate() {
            if cell.iter().any(|r| {
                !r.variance.is_finite() || r.variance < 0.0 || !(r.beta * r.eta).is_finite()
            }) {
                return Err(Error::MissingVariance {
                    client: i,
                    minibatch: j,
                });
            }
        }
    }
    Ok(())
}

/// `(√(2b)σ/(2nK√K)) Σ_j Σ_i sqrt(Σ_{t∈𝒯_{i,j}} β_t η_t Var_{i,t})`.
pub fn fsgld_bound(table: &VarianceTable, sigma: f64, b: usize, n: usize) -> Result<f64> {
    check_variance_table(table)?;
    let k = table.clients();
    if k == 0 || n == 0 || b == 0 {
        return Err(Error::invalid("fsgld_bound needs K, n, b ≥ 1"));
    }
    let kf = k as f64;
    let prefactor = (2.0 * b as f64).sqrt() * sigma / (2.0 * n as f64 * kf * kf.sqrt());
    let mut total = 0.0;
    for client in &table.cells {
        for cell in client {
            let inner: f64 = cell.iter().map(|r| r.beta * r.eta * r.variance).sum();
            total += inner.sqrt();
        }
    }
    Ok(prefactor * total)
}

/// Single-learner form `(√(2b)σ/(2n)) Σ_j sqrt(Σ_{t∈𝒯_j} β_t η_t Var_t)`.
pub fn sgld_single_client_bound(
    cells: &[Vec<RoundVariance>],
    sigma: f64,
    b: usize,
    n: usize,
) -> Result<f64> {
    let table = VarianceTable {
        cells: vec![cells.to_vec()],
    };
    check_variance_table(&table)?;
    let prefactor = (2.0 * b as f64).sqrt() * sigma / (2.0 * n as f64);
    Ok(prefactor
        * cells
            .iter()
            .map(|cell| {
                cell.iter()
                    .map(|r| r.beta * r.eta * r.variance)
                    .sum::<f64>()
                    .sqrt()
            })
            .sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_point() -> SvmBoundParams {
        SvmBoundParams::refit(100, 10, 0.2, 1.0, 0.05)
    }

    #[test]
    fn default_parameter_choice() {
        let p = reference_point();
        assert_eq!(p.m, 226);
        assert!((p.c1 - 1.2f64.sqrt()).abs() < 1e-15);
        assert_eq!(p.c1, p.c2);
        assert!((p.nu - 0.456_435_464_587_638_3).abs() < 1e-12);
    }

    #[test]
    fn epsilon_terms_at_reference_point() {
        let e = epsilon_terms(&reference_point(), false);
        assert!((e.term1 - 2.5e-3).abs() < 0.1e-3);
        assert!(
            (e.log_term2 + 285.0).abs() < 1.0,
            "log term2 {}",
            e.log_term2
        );
        assert!((e.term3 - 3.0e-4).abs() < 0.1e-4);
        assert_eq!(e.term3, e.term4);
        assert!((e.total - 3.1e-3).abs() < 0.05e-3);
        assert_eq!(e.total, e.term1 + e.term2 + e.term3 + e.term4);
    }

    #[test]
    fn epsilon_vanishes_with_m_and_saturates_at_c_one() {
        let mut p = reference_point();
        p.m = 100_000;
        assert!(epsilon_terms(&p, false).total < 1e-100);
        let mut q = reference_point();
        q.c1 = 1.0;
        q.c2 = 1.0;
        let e = epsilon_terms(&q, false);
        assert_eq!((e.term3, e.term4), (4.0, 4.0));
    }

    #[test]
    fn tight_mode_drops_term2_only_when_threshold_reached() {
        let p = reference_point();
        assert!(ball_noise_threshold(&p) >= 1.0 - 1e-12);
        let mut q = p;
        q.nu = 0.9;
        assert!(ball_noise_threshold(&q) < 1.0);
        assert_eq!(
            epsilon_terms(&q, true).term2,
            epsilon_terms(&q, false).term2
        );
        let mut r = p;
        r.m = 5;
        r.nu = 0.2;
        assert_eq!(epsilon_terms(&r, true).term2, 0.0);
        assert!(epsilon_terms(&r, false).term2 > 0.0);
    }

    #[test]
    fn rate_term_at_reference_point() {
        let rate = dsvm_rate_term(&reference_point());
        assert!((rate - 226.0 * 3.4f64.ln()).abs() < 1e-9);
        assert!((rate - 276.6).abs() < 0.05);
        let mut p = reference_point();
        p.nu = 1e9;
        let r = dsvm_rate_term(&p);
        assert!(r > 0.0 && (r / (p.m as f64 * p.c2 / p.nu) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn expected_and_tail_values() {
        let p = reference_point();
        let exp = dsvm_expected_bound(&p).unwrap();
        let tail = dsvm_tail_bound(&p).unwrap();
        // 50-digit references from tests/data/bound_reference.py
        assert!(
            (exp / 2.355_008_981_390_994 - 1.0).abs() < 1e-9,
            "expected {exp}"
        );
        assert!(
            (tail / 2.367_712_137_565_766 - 1.0).abs() < 1e-9,
            "tail {tail}"
        );
        assert!(tail >= exp);
        let mut q = p;
        q.delta = 1.0 - 1e-12;
        assert!((dsvm_tail_bound(&q).unwrap() - exp).abs() < 1e-9);
        q.delta = 1.5;
        assert!(dsvm_tail_bound(&q).is_err());
    }

    #[test]
    fn more_samples_tighten_the_tail_bound() {
        let a = dsvm_tail_bound(&SvmBoundParams::refit(100, 10, 0.2, 1.0, 0.05)).unwrap();
        let b = dsvm_tail_bound(&SvmBoundParams::refit(200, 10, 0.2, 1.0, 0.05)).unwrap();
        assert!(b < a);
    }

    #[test]
    fn single_client_equals_centralized_substitution() {
        let d = dsvm_expected_bound(&SvmBoundParams::refit(300, 1, 0.2, 1.0, 0.05)).unwrap();
        assert_eq!(d, centralized_bound(300, 1, 0.2, 1.0, 1.0).unwrap());
        let c = centralized_bound(300, 25, 0.2, 1.0, 1.0).unwrap();
        assert!(c.is_finite() && c > 0.0);
    }

    #[test]
    fn optimizer_never_worse_than_default() {
        let grid = OptimizeGrid::default();
        let (p, v) =
            optimize_svm_bound(100, 10, 0.2, 1.0, 0.05, BoundKind::Expected, &grid).unwrap();
        assert!(v <= dsvm_expected_bound(&reference_point()).unwrap());
        assert_eq!(dsvm_expected_bound(&p).unwrap(), v);
        let again =
            optimize_svm_bound(100, 10, 0.2, 1.0, 0.05, BoundKind::Expected, &grid).unwrap();
        assert_eq!(again, (p, v));
        let (_, vt) = optimize_svm_bound(100, 10, 0.2, 1.0, 0.05, BoundKind::Tail, &grid).unwrap();
        assert!(vt <= dsvm_tail_bound(&reference_point()).unwrap());
    }

    #[test]
    fn lipschitz_bound_cases() {
        let p = LipschitzBoundParams {
            lipschitz: 1.0,
            sigma: 1.0,
            hypothesis_variance: 0.25,
            n: 100,
            k: 4,
        };
        assert_eq!(lipschitz_expected_bound(&p).unwrap(), 0.03125);
        let cube = 2.0 * (0.5f64 / 1600.0).cbrt();
        assert!((cube - 0.1357).abs() < 1e-4);
        let zero = LipschitzBoundParams {
            hypothesis_variance: 0.0,
            ..p
        };
        assert_eq!(lipschitz_expected_bound(&zero).unwrap(), 0.0);
        let big = LipschitzBoundParams { k: 400, ..p };
        let small = LipschitzBoundParams { k: 800, ..p };
        let ratio =
            lipschitz_expected_bound(&big).unwrap() / lipschitz_expected_bound(&small).unwrap();
        assert!((ratio - 4.0).abs() < 1e-9);
    }

    fn single_round_cells(m: usize, value: f64) -> Vec<Vec<RoundVariance>> {
        (0..m)
            .map(|j| {
                vec![RoundVariance {
                    round: j + 1,
                    beta: 1.0,
                    eta: 1.0,
                    variance: value,
                }]
            })
            .collect()
    }

    #[test]
    fn fsgld_hand_example() {
        // K=1, n=10, b=1, σ=0.5, ten singleton cells with βηVar = 4:
        // √2·0.5/(2·10) · 10 · 2
        let table = VarianceTable {
            cells: vec![single_round_cells(10, 4.0)],
        };
        let v = fsgld_bound(&table, 0.5, 1, 10).unwrap();
        assert!((v - 2f64.sqrt() * 0.5 / 20.0 * 20.0).abs() < 1e-15);
        assert!((v - 0.707_106_781_186_547_5).abs() < 1e-12);
        assert_eq!(
            v,
            sgld_single_client_bound(&table.cells[0], 0.5, 1, 10).unwrap()
        );
    }

    #[test]
    fn fsgld_zero_and_scaling() {
        let zero = VarianceTable {
            cells: vec![single_round_cells(3, 0.0), single_round_cells(3, 0.0)],
        };
        assert_eq!(fsgld_bound(&zero, 1.0, 2, 6).unwrap(), 0.0);
        let one = VarianceTable {
            cells: vec![single_round_cells(3, 1.5), single_round_cells(3, 0.5)],
        };
        let four = VarianceTable {
            cells: vec![single_round_cells(3, 6.0), single_round_cells(3, 2.0)],
        };
        let ratio = fsgld_bound(&four, 1.0, 2, 6).unwrap() / fsgld_bound(&one, 1.0, 2, 6).unwrap();
        assert!((ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fsgld_missing_variance_is_an_error() {
        let mut cells = single_round_cells(2, 1.0);
        cells[1][0].variance = f64::NAN;
        let table = VarianceTable { cells: vec![cells] };
        assert!(matches!(
            fsgld_bound(&table, 1.0, 1, 2),
            Err(Error::MissingVariance {
                client: 0,
                minibatch: 1
            })
        ));
    }
}
