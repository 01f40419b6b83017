use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RdInstance;
use crate::error::{Error, Result};
use crate::linalg;

/// Matrices at least this large use parallel mat-vec products.
const PARALLEL_CELLS: usize = 1 << 16;
/// Fixed chunk count for the transposed product so sums are thread-count independent.
const REDUCE_CHUNKS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaOptions {
    /// Stop when the rate changes by less than this between checks, or the
    /// upper/lower sandwich gap closes below it.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative slope bracket width ending the bisection.
    pub slope_tol: f64,
    /// The bisection also ends once the chord and tangent estimates of the
    /// rate at the target differ by less than this.
    pub rate_tol: f64,
    pub max_bisection: usize,
}

impl Default for BaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200_000,
            slope_tol: 1e-9,
            rate_tol: 1e-7,
            max_bisection: 200,
        }
    }
}

/// One point of the rate-distortion curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaPoint {
    pub slope: f64,
    /// Mutual information of the final test channel (an upper bound on `R(distortion)`).
    pub rate: f64,
    pub distortion: f64,
    /// Dual lower bound on `R(distortion)`.
    pub lower_bound: f64,
    pub iterations: usize,
}

struct Component {
    weight: f64,
    p: Vec<f64>,
    d: Vec<Vec<f64>>,
    row_min: Vec<f64>,
    ny: usize,
    q: Vec<f64>,
}

impl Component {
    fn new(weight: f64, p: &[f64], d: &[Vec<f64>]) -> Self {
        let ny = d[0].len();
        Self {
            weight,
            p: p.to_vec(),
            d: d.to_vec(),
            row_min: d
                .iter()
                .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min))
                .collect(),
            ny,
            q: vec![1.0 / ny as f64; ny],
        }
    }

    fn min_distortion(&self) -> f64 {
        self.p.iter().zip(&self.row_min).map(|(p, m)| p * m).sum()
    }

    fn zero_rate_distortion(&self) -> f64 {
        (0..self.ny)
            .map(|j| {
                self.p
                    .iter()
                    .zip(&self.d)
                    .map(|(p, r)| p * r[j])
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn range(&self) -> f64 {
        self.d
            .iter()
            .zip(&self.row_min)
            .map(|(r, m)| r.iter().copied().fold(f64::NEG_INFINITY, f64::max) - m)
            .fold(0.0, f64::max)
    }

    fn kernel(&self, s: f64, par: bool) -> Vec<f64> {
        let ny = self.ny;
        let mut kernel = vec![0.0; self.p.len() * ny];
        let fill = |(row_k, (row_d, m)): (&mut [f64], (&Vec<f64>, &f64))| {
            for (k, d) in row_k.iter_mut().zip(row_d) {
                *k = (s * (d - m)).exp();
            }
        };
        if par {
            kernel
                .par_chunks_mut(ny)
                .zip(self.d.par_iter().zip(self.row_min.par_iter()))
                .for_each(fill);
        } else {
            kernel
                .chunks_mut(ny)
                .zip(self.d.iter().zip(self.row_min.iter()))
                .for_each(fill);
        }
        kernel
    }

    /// Blahut-Arimoto at slope `s ≤ 0`, warm-started from the stored output
    /// marginal. Each cycle takes two plain updates and a SQUAREM
    /// extrapolation in log space, kept only if it improves the dual
    /// objective `−Σ_x p(x) ln Z_x`.
    fn solve(&mut self, s: f64, opts: &BaOptions) -> Result<BaPoint> {
        let nx = self.p.len();
        let ny = self.ny;
        let par = nx * ny >= PARALLEL_CELLS;
        let kernel = self.kernel(s, par);
        let mut ws = Workspace::new(nx, ny);

        // revive letters a previous slope may have driven to zero
        let uniform = 1.0 / ny as f64;
        for q in &mut self.q {
            *q = 0.999 * *q + 0.001 * uniform;
        }
        let shift = self.min_distortion();
        let mut q1 = vec![0.0; ny];
        let mut q2 = vec![0.0; ny];
        let mut extrapolated = vec![0.0; ny];
        let mut cached = false;
        let mut prev_rate = f64::INFINITY;
        let mut iterations = 0;
        loop {
            iterations += 1;
            if !cached {
                eval_z(&kernel, &self.p, &self.q, &mut ws, par);
            }
            update(&kernel, &self.q, &mut ws, &mut q1, par);
            let (rate, lower, distortion) = self.diagnostics(&kernel, &ws, s, shift, par);
            if !rate.is_finite() || !distortion.is_finite() {
                return Err(Error::Divergence(
                    "Blahut-Arimoto produced a non-finite value",
                ));
            }
            let done = (prev_rate - rate).abs() < opts.tol || rate - lower < opts.tol;
            if done {
                return Ok(BaPoint {
                    slope: s,
                    rate,
                    distortion,
                    lower_bound: lower.min(rate),
                    iterations,
                });
            }
            if iterations >= opts.max_iter {
                return Err(Error::NonConvergence {
                    iterations,
                    rate,
                    distortion,
                });
            }
            prev_rate = rate;

            let f1 = eval_z(&kernel, &self.p, &q1, &mut ws, par);
            update(&kernel, &q1, &mut ws, &mut q2, par);
            let mut r2 = 0.0;
            let mut v2 = 0.0;
            for ((a, b), c) in self.q.iter().zip(&q1).zip(&q2) {
                let r = b.ln() - a.ln();
                let v = c.ln() - 2.0 * b.ln() + a.ln();
                r2 += r * r;
                v2 += v * v;
            }
            cached = false;
            if v2 > 0.0 && r2 > 0.0 && (r2 / v2).is_finite() {
                let alpha = -(r2 / v2).sqrt().max(1.0);
                for (((e, a), b), c) in extrapolated.iter_mut().zip(&self.q).zip(&q1).zip(&q2) {
                    let (la, lb, lc) = (a.ln(), b.ln(), c.ln());
                    *e = la - 2.0 * alpha * (lb - la) + alpha * alpha * (lc - 2.0 * lb + la);
                }
                softmax(&mut extrapolated);
                floor(&mut extrapolated);
                let fe = eval_z(&kernel, &self.p, &extrapolated, &mut ws, par);
                if fe.is_finite() && fe <= f1 {
                    self.q.copy_from_slice(&extrapolated);
                    cached = true;
                }
            }
            if !cached {
                self.q.copy_from_slice(&q2);
            }
        }
    }

    /// Rate, dual lower bound and distortion of the channel `q_y K_xy / Z_x`
    /// for the marginal whose products are in `ws`.
    fn diagnostics(
        &self,
        kernel: &[f64],
        ws: &Workspace,
        s: f64,
        shift: f64,
        par: bool,
    ) -> (f64, f64, f64) {
        let ny = self.ny;
        let q = &ws.q_in;
        let dist_rows = |((row_k, row_d), wi): ((&[f64], &Vec<f64>), &f64)| {
            let mut acc = 0.0;
            for ((k, d), qy) in row_k.iter().zip(row_d).zip(q) {
                acc += qy * k * d;
            }
            wi * acc
        };
        let distortion: f64 = if par {
            kernel
                .par_chunks(ny)
                .zip(self.d.par_iter())
                .zip(ws.w.par_iter())
                .map(dist_rows)
                .collect::<Vec<_>>()
                .iter()
                .sum()
        } else {
            kernel
                .chunks(ny)
                .zip(self.d.iter())
                .zip(ws.w.iter())
                .map(dist_rows)
                .sum()
        };
        let log_z: f64 = self
            .p
            .iter()
            .zip(&ws.z)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, z)| p * z.ln())
            .sum();
        let mut mean_log_c = 0.0;
        let mut max_log_c = f64::NEG_INFINITY;
        for (qy, cy) in q.iter().zip(&ws.c) {
            let next = qy * cy;
            if next > 0.0 {
                mean_log_c += next * cy.ln();
            }
            if *qy > 0.0 && *cy > 0.0 {
                max_log_c = max_log_c.max(cy.ln());
            }
        }
        let base = s * (distortion - shift) - log_z;
        (
            (base - mean_log_c).max(0.0),
            (base - max_log_c).max(0.0),
            distortion,
        )
    }
}

struct Workspace {
    q_in: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
    c: Vec<f64>,
}

impl Workspace {
    fn new(nx: usize, ny: usize) -> Self {
        Self {
            q_in: vec![0.0; ny],
            z: vec![0.0; nx],
            w: vec![0.0; nx],
            c: vec![0.0; ny],
        }
    }
}

/// Computes `Z = Kq` and `p/Z` into `ws`; returns the dual objective `−Σ_x p(x) ln Z_x`.
fn eval_z(kernel: &[f64], p: &[f64], q: &[f64], ws: &mut Workspace, par: bool) -> f64 {
    ws.q_in.copy_from_slice(q);
    matvec(kernel, q.len(), q, &mut ws.z, par);
    let mut objective = 0.0;
    for ((wi, zi), pi) in ws.w.iter_mut().zip(&mut ws.z).zip(p) {
        *zi = zi.max(f64::MIN_POSITIVE);
        *wi = pi / *zi;
        if *pi > 0.0 {
            objective -= pi * zi.ln();
        }
    }
    objective
}

/// The Blahut-Arimoto update `q ↦ q ∘ Kᵀ(p/Z)`, using `p/Z` from [`eval_z`].
fn update(kernel: &[f64], q: &[f64], ws: &mut Workspace, out: &mut [f64], par: bool) {
    transposed_matvec(kernel, q.len(), &ws.w, &mut ws.c, par);
    for ((o, qy), cy) in out.iter_mut().zip(q).zip(&ws.c) {
        *o = qy * cy;
    }
    normalize(out);
    floor(out);
}

/// Keeps every letter strictly positive so log-space steps stay finite.
fn floor(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = x.max(1e-300);
    }
}

fn softmax(v: &mut [f64]) {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for x in v.iter_mut() {
        *x = (*x - top).exp();
    }
    normalize(v);
}

fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    linalg::scale(1.0 / total, v);
}

fn matvec(mat: &[f64], cols: usize, v: &[f64], out: &mut [f64], par: bool) {
    if par {
        out.par_iter_mut()
            .zip(mat.par_chunks(cols))
            .for_each(|(o, row)| *o = linalg::dot(row, v));
    } else {
        for (o, row) in out.iter_mut().zip(mat.chunks(cols)) {
            *o = linalg::dot(row, v);
        }
    }
}

/// `out = matᵀ w`, summing fixed row chunks in a fixed order.
fn transposed_matvec(mat: &[f64], cols: usize, w: &[f64], out: &mut [f64], par: bool) {
    let rows = w.len();
    let accumulate = |range: std::ops::Range<usize>| {
        let mut acc = vec![0.0; cols];
        for x in range {
            linalg::axpy(w[x], &mat[x * cols..(x + 1) * cols], &mut acc);
        }
        acc
    };
    if par {
        let chunk = rows.div_ceil(REDUCE_CHUNKS);
        let partials: Vec<Vec<f64>> = (0..REDUCE_CHUNKS)
            .into_par_iter()
            .map(|i| accumulate((i * chunk).min(rows)..((i + 1) * chunk).min(rows)))
            .collect();
        out.fill(0.0);
        for p in &partials {
            linalg::axpy(1.0, p, out);
        }
    } else {
        out.copy_from_slice(&accumulate(0..rows));
    }
}

/// Weighted family of rate-distortion problems sharing one slope. A single
/// component is the classical problem; several give the conditional version.
pub(crate) struct SlopeSolver {
    components: Vec<Component>,
    opts: BaOptions,
}

/// One conditioning value: its weight, source pmf and distortion matrix.
pub(crate) type Part<'a> = (f64, &'a [f64], &'a [Vec<f64>]);

impl SlopeSolver {
    pub(crate) fn new(parts: &[Part<'_>], opts: BaOptions) -> Self {
        Self {
            components: parts
                .iter()
                .filter(|(w, _, _)| *w > 0.0)
                .map(|(w, p, d)| Component::new(*w, p, d))
                .collect(),
            opts,
        }
    }

    pub(crate) fn min_distortion(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.min_distortion())
            .sum()
    }

    pub(crate) fn zero_rate_distortion(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.zero_rate_distortion())
            .sum()
    }

    pub(crate) fn solve_slope(&mut self, s: f64) -> Result<BaPoint> {
        let mut total = BaPoint {
            slope: s,
            rate: 0.0,
            distortion: 0.0,
            lower_bound: 0.0,
            iterations: 0,
        };
        let opts = self.opts;
        for c in &mut self.components {
            let pt = c.solve(s, &opts)?;
            total.rate += c.weight * pt.rate;
            total.distortion += c.weight * pt.distortion;
            total.lower_bound += c.weight * pt.lower_bound;
            total.iterations += pt.iterations;
        }
        Ok(total)
    }

    /// Rate at distortion `target`: bisection on the slope, then the chord
    /// between the bracketing points (achievable by time-sharing) as the rate
    /// and the best dual line through `target` as the lower bound.
    pub(crate) fn solve_target(&mut self, target: f64) -> Result<BaPoint> {
        let (below, above) = self.bracket_target(target)?;
        if below.slope == 0.0 {
            return Ok(below);
        }
        let line = |p: &BaPoint| p.lower_bound + p.slope * (target - p.distortion);
        let (rate, lower_bound) = match above {
            Some(hi) if hi.distortion > below.distortion => {
                let frac = (target - below.distortion) / (hi.distortion - below.distortion);
                let chord = below.rate + frac * (hi.rate - below.rate);
                (chord, line(&below).max(line(&hi)).min(chord))
            }
            _ => (
                below.rate + below.slope * (target - below.distortion),
                line(&below),
            ),
        };
        Ok(BaPoint {
            slope: below.slope,
            rate: rate.max(0.0),
            distortion: target,
            lower_bound: lower_bound.max(0.0),
            iterations: below.iterations + above.map_or(0, |p| p.iterations),
        })
    }

    /// Slope bisection; returns the zero-rate point, or the bracketing points
    /// with distortion at most and above `target`.
    fn bracket_target(&mut self, target: f64) -> Result<(BaPoint, Option<BaPoint>)> {
        let d_min = self.min_distortion();
        let d_zero = self.zero_rate_distortion();
        let scale = 1.0 + d_min.abs().max(d_zero.abs());
        if target >= d_zero - 1e-14 * scale {
            let zero = BaPoint {
                slope: 0.0,
                rate: 0.0,
                distortion: d_zero,
                lower_bound: 0.0,
                iterations: 0,
            };
            return Ok((zero, None));
        }
        if target < d_min - 1e-12 * scale {
            return Err(Error::Infeasible { target, min: d_min });
        }
        let range = self
            .components
            .iter()
            .map(Component::range)
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);

        // bracket: `below` has distortion ≤ target, `above` has distortion > target
        let mut s = -1.0 / (target - d_min).max(1e-6 * range);
        let mut pt = self.solve_slope(s)?;
        let (mut below, mut above): (BaPoint, Option<BaPoint>);
        if pt.distortion <= target {
            below = pt;
            above = None;
            for _ in 0..60 {
                s *= 0.5;
                pt = self.solve_slope(s)?;
                if pt.distortion > target {
                    above = Some(pt);
                    break;
                }
                below = pt;
            }
        } else {
            above = Some(pt);
            below = pt;
            let mut found = false;
            for _ in 0..80 {
                s *= 2.0;
                pt = self.solve_slope(s)?;
                if pt.distortion <= target {
                    below = pt;
                    found = true;
                    break;
                }
                above = Some(pt);
            }
            if !found {
                // target sits at the minimum distortion; the steepest point is the best available
                below = pt;
            }
        }

        if let Some(hi) = above.as_mut() {
            for _ in 0..self.opts.max_bisection {
                if (below.slope - hi.slope).abs() <= self.opts.slope_tol * below.slope.abs()
                    || (target - below.distortion).abs() <= 1e-13 * scale
                    || chord_tangent_gap(&below, hi, target) <= self.opts.rate_tol
                {
                    break;
                }
                let mid = -(below.slope * hi.slope).sqrt();
                let pt = self.solve_slope(mid)?;
                if pt.distortion <= target {
                    below = pt;
                } else {
                    *hi = pt;
                }
            }
        }
        Ok((below, above))
    }
}

/// Difference between the chord through two curve points and the tangent
/// lines at them, evaluated at `target` between their distortions.
fn chord_tangent_gap(lo: &BaPoint, hi: &BaPoint, target: f64) -> f64 {
    let span = hi.distortion - lo.distortion;
    if span <= 0.0 {
        return f64::INFINITY;
    }
    let frac = (target - lo.distortion) / span;
    let chord = lo.rate + frac * (hi.rate - lo.rate);
    let tangent_lo = lo.rate + lo.slope * (target - lo.distortion);
    let tangent_hi = hi.rate + hi.slope * (target - hi.distortion);
    chord - tangent_lo.max(tangent_hi)
}

/// One Blahut-Arimoto solve at slope `s ≤ 0` (the target field is ignored).
pub fn blahut_arimoto(inst: &RdInstance, slope: f64, opts: &BaOptions) -> Result<BaPoint> {
    inst.validate()?;
    if !(slope <= 0.0) {
        return Err(Error::invalid("slope must be ≤ 0"));
    }
    SlopeSolver::new(&[(1.0, inst.source.probs(), &inst.distortion)], *opts).solve_slope(slope)
}

/// `R(target)` for the instance. Returns rate 0 when the target is at least
/// the zero-rate distortion and [`Error::Infeasible`] below the minimum distortion.
pub fn rd_at_distortion(inst: &RdInstance, opts: &BaOptions) -> Result<BaPoint> {
    inst.validate()?;
    if !inst.target.is_finite() {
        return Err(Error::invalid("target distortion must be finite"));
    }
    SlopeSolver::new(&[(1.0, inst.source.probs(), &inst.distortion)], *opts)
        .solve_target(inst.target)
}
