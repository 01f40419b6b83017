//! Local learners and losses.
//!
//! Hypotheses are zero-bias linear classifiers `x ↦ sign⟨x, w⟩`. Clients either
//! train a hinge-loss SVM by SGD (the DSVM client) or take one SGLD step on a
//! differentiable surrogate (the FSGLD client).

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub w: Vec<f64>,
}

impl Hypothesis {
    pub fn new(w: Vec<f64>) -> Self {
        Self { w }
    }

    pub fn zeros(d: usize) -> Self {
        Self { w: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.w)
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        linalg::dot(x, &self.w)
    }

    /// Copy scaled into the unit ball (unchanged when `‖w‖ ≤ 1`).
    pub fn clipped_to_unit_ball(&self) -> Self {
        let n = self.norm();
        if n <= 1.0 {
            self.clone()
        } else {
            Self {
                w: self.w.iter().map(|v| v / n).collect(),
            }
        }
    }
}

/// `1{y⟨x,w⟩ < 0}`. A zero score counts as correct.
pub fn loss_zero_one(x: &[f64], y: f64, h: &Hypothesis) -> f64 {
    loss_margin(x, y, h, 0.0)
}

/// `1{y⟨x,w⟩ < θ}`.
pub fn loss_margin(x: &[f64], y: f64, h: &Hypothesis, theta: f64) -> f64 {
    if y * h.score(x) < theta {
        1.0
    } else {
        0.0
    }
}

/// Which empirical loss to average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    ZeroOne,
    Margin(f64),
}

impl Loss {
    fn threshold(self) -> f64 {
        match self {
            Loss::ZeroOne => 0.0,
            Loss::Margin(t) => t,
        }
    }
}

fn check_dim(data: &Dataset, h: &Hypothesis) -> Result<()> {
    if data.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: h.dim(),
        });
    }
    Ok(())
}

pub fn empirical_risk(data: &Dataset, h: &Hypothesis, loss: Loss) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dim(data, h)?;
    let t = loss.threshold();
    let errors = data.rows().filter(|(x, y)| y * h.score(x) < t).count();
    Ok(errors as f64 / data.len() as f64)
}

/// 0-1 risk on a held-out set standing in for the population.
pub fn population_risk_estimate(test: &Dataset, h: &Hypothesis) -> Result<f64> {
    empirical_risk(test, h, Loss::ZeroOne)
}

/// Hyperparameters of the SGD hinge-loss trainer. Defaults reproduce the
/// experiment's settings: `η₀ = 0.01`, `α = 1e-5`, batch 1, at most 200 epochs,
/// stop once the training 0-1 risk drops below 0.001, and multiply the step by
/// 0.2 whenever the epoch loss fails to improve by 0.01 over 10 epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdParams {
    pub eta0: f64,
    pub alpha: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr_decay_factor: f64,
    pub no_improve_tol: f64,
    pub no_improve_epochs: usize,
    pub target_train_risk: f64,
    pub seed: u64,
}

impl Default for SgdParams {
    fn default() -> Self {
        Self {
            eta0: 0.01,
            alpha: 0.00001,
            batch_size: 1,
            max_epochs: 200,
            lr_decay_factor: 0.2,
            no_improve_tol: 0.01,
            no_improve_epochs: 10,
            target_train_risk: 0.001,
            seed: 0,
        }
    }
}

impl SgdParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0)
            || !(self.alpha >= 0.0)
            || self.batch_size == 0
            || self.max_epochs == 0
            || !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0)
            || !(self.no_improve_tol >= 0.0)
            || self.no_improve_epochs == 0
            || !(self.target_train_risk >= 0.0)
        {
            return Err(Error::invalid(format!("invalid SGD parameters: {self:?}")));
        }
        Ok(())
    }
}

/// Result of [`sgd_train_svm`] with the per-epoch traces.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmFit {
    pub hypothesis: Hypothesis,
    /// Training 0-1 risk after each epoch.
    pub risk_trace: Vec<f64>,
    /// Mean hinge loss seen during each epoch.
    pub loss_trace: Vec<f64>,
    /// Step size in effect during each epoch.
    pub eta_trace: Vec<f64>,
}

impl SvmFit {
    pub fn epochs(&self) -> usize {
        self.risk_trace.len()
    }

    pub fn final_train_risk(&self) -> f64 {
        self.risk_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Minimizes `α/2‖w‖² + mean hinge(y⟨x,w⟩)` by minibatch SGD from `w = 0`.
///
/// Samples are reshuffled every epoch from the `seed` stream. After each epoch
/// the training 0-1 risk is checked against `target_train_risk`; the step size
/// decays by `lr_decay_factor` whenever the epoch hinge loss has not dropped by
/// `no_improve_tol` over the last `no_improve_epochs` epochs. The window restarts
/// at every check.
pub fn sgd_train_svm(shard: &Dataset, params: &SgdParams) -> Result<SvmFit> {
    if shard.is_empty() {
        return Err(Error::EmptyDataset);
    }
    params.validate()?;
    let d = shard.dim();
    let n = shard.len();
    let mut w = vec![0.0; d];
    let mut r = rng::stream(params.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut eta = params.eta0;
    let mut anchor: Option<(usize, f64)> = None;
    let mut fit = SvmFit {
        hypothesis: Hypothesis::zeros(d),
        risk_trace: Vec::new(),
        loss_trace: Vec::new(),
        eta_trace: Vec::new(),
    };

    for epoch in 0..params.max_epochs {
        order.shuffle(&mut r);
        let mut loss_sum = 0.0;
        for batch in order.chunks(params.batch_size) {
            let inv_b = 1.0 / batch.len() as f64;
            // margins are evaluated at the pre-update weights
            let margins: Vec<f64> = batch
                .iter()
                .map(|&i| shard.label(i) * linalg::dot(shard.row(i), &w))
                .collect();
            linalg::scale(1.0 - eta * params.alpha, &mut w);
            for (&i, &m) in batch.iter().zip(&margins) {
                if m < 1.0 {
                    loss_sum += 1.0 - m;
                    linalg::axpy(eta * inv_b * shard.label(i), shard.row(i), &mut w);
                }
            }
        }
        let epoch_loss = loss_sum / n as f64;
        if !epoch_loss.is_finite() || !linalg::all_finite(&w) {
            return Err(Error::Divergence("SGD hinge training"));
        }
        fit.eta_trace.push(eta);
        fit.loss_trace.push(epoch_loss);

        match anchor {
            None => anchor = Some((epoch, epoch_loss)),
            Some((start, loss0)) if epoch - start >= params.no_improve_epochs => {
                if epoch_loss > loss0 - params.no_improve_tol {
                    eta *= params.lr_decay_factor;
                }
                anchor = Some((epoch, epoch_loss));
            }
            Some(_) => {}
        }

        let h = Hypothesis::new(w.clone());
        let risk = empirical_risk(shard, &h, Loss::ZeroOne)?;
        fit.risk_trace.push(risk);
        if risk < params.target_train_risk {
            break;
        }
    }
    fit.hypothesis = Hypothesis::new(w);
    Ok(fit)
}

/// Differentiable per-sample surrogate loss for SGLD.
pub trait Surrogate: Sync {
    fn loss(&self, x: &[f64], y: f64, w: &[f64]) -> f64;
    /// Writes `∇_w loss(x, y, w)` into `grad`.
    fn grad(&self, x: &[f64], y: f64, w: &[f64], grad: &mut [f64]);
}

/// `log(1 + exp(−y⟨x,w⟩))`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Logistic;

/// `σ(−t) = 1/(1 + e^{t})` without overflow.
fn sigmoid_neg(t: f64) -> f64 {
    if t >= 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

impl Surrogate for Logistic {
    fn loss(&self, x: &[f64], y: f64, w: &[f64]) -> f64 {
        let t = y * linalg::dot(x, w);
        // log(1 + e^{-t}) = max(-t, 0) + log(1 + e^{-|t|})
        (-t).max(0.0) + (-t.abs()).exp().ln_1p()
    }

    fn grad(&self, x: &[f64], y: f64, w: &[f64], grad: &mut [f64]) {
        let t = y * linalg::dot(x, w);
        let c = -y * sigmoid_neg(t);
        for (g, xi) in grad.iter_mut().zip(x) {
            *g = c * xi;
        }
    }
}

/// Minibatch-mean surrogate gradient `(1/b) Σ_l ∇ℓ̂(z_l, w)`.
pub fn minibatch_gradient(
    batch: &Dataset,
    w: &[f64],
    surrogate: &dyn Surrogate,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if batch.dim() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: batch.dim(),
            got: w.len(),
        });
    }
    let mut mean = vec![0.0; w.len()];
    let mut g = vec![0.0; w.len()];
    for (x, y) in batch.rows() {
        surrogate.grad(x, y, w, &mut g);
        linalg::axpy(1.0, &g, &mut mean);
    }
    linalg::scale(1.0 / batch.len() as f64, &mut mean);
    if !linalg::all_finite(&mean) {
        return Err(Error::Divergence("SGLD gradient"));
    }
    Ok(mean)
}

/// Per-step SGLD settings; `beta = ∞` disables the noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgldStepParams {
    pub eta: f64,
    pub beta: f64,
    pub seed: u64,
}

impl SgldStepParams {
    pub fn noise_scale(&self) -> f64 {
        (2.0 * self.eta / self.beta).sqrt()
    }
}

/// One SGLD iteration: `w − η·∇ℓ̂(batch, w) + sqrt(2η/β)·V`, `V ~ N(0, I)` from `seed`.
pub fn sgld_step(
    w_in: &Hypothesis,
    minibatch: &Dataset,
    params: &SgldStepParams,
    surrogate: &dyn Surrogate,
) -> Result<Hypothesis> {
    let grad = minibatch_gradient(minibatch, &w_in.w, surrogate)?;
    Ok(sgld_step_with_gradient(w_in, &grad, params))
}

pub(crate) fn sgld_step_with_gradient(
    w_in: &Hypothesis,
    grad: &[f64],
    params: &SgldStepParams,
) -> Hypothesis {
    let mut w = w_in.w.clone();
    linalg::axpy(-params.eta, grad, &mut w);
    let scale = params.noise_scale();
    // the noise is drawn even when scale = 0 so streams stay aligned
    let mut noise = vec![0.0; w.len()];
    rng::fill_standard_normal(&mut rng::stream(params.seed), &mut noise);
    if scale > 0.0 {
        linalg::axpy(scale, &noise, &mut w);
    }
    Hypothesis::new(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::synth_two_gaussians;

    fn e1(d: usize) -> Hypothesis {
        let mut w = vec![0.0; d];
        w[0] = 1.0;
        Hypothesis::new(w)
    }

    #[test]
    fn zero_one_cases() {
        let h = e1(2);
        assert_eq!(loss_zero_one(&[1.0, 0.0], 1.0, &h), 0.0);
        assert_eq!(loss_zero_one(&[1.0, 0.0], -1.0, &h), 1.0);
        // exactly zero score is not an error
        assert_eq!(loss_zero_one(&[0.0, 1.0], -1.0, &h), 0.0);
    }

    #[test]
    fn margin_cases() {
        let h = e1(1);
        assert_eq!(loss_margin(&[0.15], 1.0, &h, 0.2), 1.0);
        assert_eq!(loss_margin(&[0.25], 1.0, &h, 0.2), 0.0);
        // tie counts as correct
        assert_eq!(loss_margin(&[0.5], 1.0, &h, 0.5), 0.0);
    }

    #[test]
    fn empirical_risk_counts() {
        let ds =
            Dataset::from_rows(&[vec![1.0], vec![1.0], vec![-1.0]], vec![-1.0, 1.0, 1.0]).unwrap();
        let h = e1(1);
        assert!((empirical_risk(&ds, &h, Loss::ZeroOne).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let h2 = Hypothesis::new(vec![2.0]);
        assert_eq!(
            empirical_risk(&ds, &h, Loss::ZeroOne).unwrap(),
            empirical_risk(&ds, &h2, Loss::ZeroOne).unwrap()
        );
        let good = Dataset::from_rows(&[vec![1.0], vec![-2.0]], vec![1.0, -1.0]).unwrap();
        assert_eq!(population_risk_estimate(&good, &h).unwrap(), 0.0);
        assert!(empirical_risk(&ds, &Hypothesis::zeros(2), Loss::ZeroOne).is_err());
    }

    #[test]
    fn defaults_match_table() {
        let p = SgdParams::default();
        assert_eq!(
            (p.eta0, p.alpha, p.batch_size, p.max_epochs),
            (0.01, 0.00001, 1, 200)
        );
        assert_eq!(p.target_train_risk, 0.001);
    }

    #[test]
    fn separable_pair_is_fit() {
        let ds = Dataset::from_rows(&[vec![1.0, 0.5], vec![-1.0, 0.2]], vec![1.0, -1.0]).unwrap();
        let fit = sgd_train_svm(&ds, &SgdParams::default()).unwrap();
        assert_eq!(fit.final_train_risk(), 0.0);
        assert_eq!(fit.epochs(), 1);
    }

    #[test]
    fn separated_gaussians_train_to_target() {
        let ds = synth_two_gaussians(2, 500, 6.0, 0.0, 21).unwrap();
        let fit = sgd_train_svm(&ds, &SgdParams::default().with_seed(3)).unwrap();
        assert!(fit.epochs() <= 200);
        // an occasional overlapping point can keep the risk at 1/500
        assert!(
            fit.final_train_risk() <= 0.002,
            "risk {}",
            fit.final_train_risk()
        );
    }

    #[test]
    fn training_is_deterministic() {
        let ds = synth_two_gaussians(5, 200, 1.0, 0.1, 4).unwrap();
        let p = SgdParams::default().with_seed(99);
        let a = sgd_train_svm(&ds, &p).unwrap();
        let b = sgd_train_svm(&ds, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stopping_rule_and_decay_fire_as_configured() {
        let ds = synth_two_gaussians(3, 100, 0.5, 0.3, 8).unwrap();
        let p = SgdParams {
            max_epochs: 40,
            ..SgdParams::default()
        };
        let fit = sgd_train_svm(&ds, &p).unwrap();
        // the noisy task never reaches the target, so every epoch runs
        assert_eq!(fit.epochs(), 40);
        // recompute the schedule from the recorded losses
        let mut eta = p.eta0;
        let n = p.no_improve_epochs;
        for (e, &loss) in fit.loss_trace.iter().enumerate() {
            assert_eq!(fit.eta_trace[e], eta);
            if e > 0 && e % n == 0 && loss > fit.loss_trace[e - n] - p.no_improve_tol {
                eta *= p.lr_decay_factor;
            }
        }
        assert!(fit.eta_trace.last().unwrap() < &p.eta0);
    }

    struct ZeroGrad;
    impl Surrogate for ZeroGrad {
        fn loss(&self, _: &[f64], _: f64, _: &[f64]) -> f64 {
            0.0
        }
        fn grad(&self, _: &[f64], _: f64, _: &[f64], g: &mut [f64]) {
            g.fill(0.0);
        }
    }

    struct HalfSquaredNorm;
    impl Surrogate for HalfSquaredNorm {
        fn loss(&self, _: &[f64], _: f64, w: &[f64]) -> f64 {
            0.5 * linalg::dot(w, w)
        }
        fn grad(&self, _: &[f64], _: f64, w: &[f64], g: &mut [f64]) {
            g.copy_from_slice(w);
        }
    }

    #[test]
    fn sgld_vanishing_step_returns_input() {
        let batch = Dataset::from_rows(&[vec![1.0, -1.0]], vec![1.0]).unwrap();
        let w = Hypothesis::new(vec![0.3, -0.7]);
        let p = SgldStepParams {
            eta: 1e-14,
            beta: 1.0,
            seed: 5,
        };
        let out = sgld_step(&w, &batch, &p, &Logistic).unwrap();
        for (a, b) in out.w.iter().zip(&w.w) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn sgld_quadratic_without_noise() {
        let batch = Dataset::from_rows(&[vec![0.0, 0.0]], vec![1.0]).unwrap();
        let p = SgldStepParams {
            eta: 0.1,
            beta: f64::INFINITY,
            seed: 1,
        };
        let out = sgld_step(&e1(2), &batch, &p, &HalfSquaredNorm).unwrap();
        assert!((out.w[0] - 0.9).abs() < 1e-15);
        assert_eq!(out.w[1], 0.0);
    }

    #[test]
    fn sgld_noise_variance() {
        // zero gradient, β = 2, η = 0.5: increments ~ N(0, 0.5 I)
        let batch = Dataset::from_rows(&[vec![0.0, 0.0, 0.0]], vec![1.0]).unwrap();
        let w = Hypothesis::zeros(3);
        let draws = 10_000;
        let mut sq = 0.0;
        for s in 0..draws {
            let p = SgldStepParams {
                eta: 0.5,
                beta: 2.0,
                seed: s,
            };
            let out = sgld_step(&w, &batch, &p, &ZeroGrad).unwrap();
            sq += linalg::dot(&out.w, &out.w);
        }
        let var = sq / (3 * draws) as f64;
        assert!((var - 0.5).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn sgld_large_beta_approaches_gradient_step() {
        let ds = synth_two_gaussians(3, 8, 1.0, 0.0, 2).unwrap();
        let w = Hypothesis::new(vec![0.1, 0.2, -0.3]);
        let det = sgld_step(
            &w,
            &ds,
            &SgldStepParams {
                eta: 0.1,
                beta: f64::INFINITY,
                seed: 4,
            },
            &Logistic,
        )
        .unwrap();
        let noisy = sgld_step(
            &w,
            &ds,
            &SgldStepParams {
                eta: 0.1,
                beta: 1e12,
                seed: 4,
            },
            &Logistic,
        )
        .unwrap();
        for (a, b) in det.w.iter().zip(&noisy.w) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn logistic_gradient_edge_cases() {
        let mut g = vec![0.0; 2];
        Logistic.grad(&[1.0, 2.0], -1.0, &[0.0, 0.0], &mut g);
        assert_eq!(g, vec![0.5, 1.0]);
        Logistic.grad(&[1.0, 0.0], 1.0, &[1e6, 0.0], &mut g);
        assert!(g.iter().all(|v| v.abs() < 1e-300));
        assert!(Logistic.loss(&[1.0], 1.0, &[-1e6]).is_finite());
    }

    #[test]
    fn logistic_gradient_matches_central_differences() {
        let mut r = rng::stream(17);
        let h = 1e-6;
        for _ in 0..20 {
            let mut x = vec![0.0; 4];
            let mut w = vec![0.0; 4];
            rng::fill_standard_normal(&mut r, &mut x);
            rng::fill_standard_normal(&mut r, &mut w);
            let y = if rng::unit_uniform(&mut r) < 0.5 {
                1.0
            } else {
                -1.0
            };
            let mut g = vec![0.0; 4];
            Logistic.grad(&x, y, &w, &mut g);
            for k in 0..4 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[k] += h;
                wm[k] -= h;
                let fd = (Logistic.loss(&x, y, &wp) - Logistic.loss(&x, y, &wm)) / (2.0 * h);
                let rel = (fd - g[k]).abs() / g[k].abs().max(1e-3);
                assert!(rel < 1e-5, "coordinate {k}: fd {fd} vs {}", g[k]);
            }
        }
    }
}
