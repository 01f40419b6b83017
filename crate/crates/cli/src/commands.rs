//! Subcommand bodies. Each returns the files it wrote and a short report.

use std::path::{Path, PathBuf};

use serde::Serialize;

use distgen_core::bounds::{
    centralized_bound, centralized_tail_bound, dsvm_report, epsilon_terms, optimize_svm_bound,
    EpsilonBreakdown, SvmBoundParams, SvmBoundReport,
};
use distgen_core::compression::{validate_lemma3, Lemma3Row};
use distgen_core::distributed::{
    estimate_limit_gap, fsgld_cell, summarize, sweep, CellSummary, ExperimentKind, FsgldCell,
    FsgldConfig, FsgldSchedule, LimitGap, SweepRow,
};
use distgen_core::learners::Logistic;
use distgen_core::ratedistortion::{
    algorithm_rd, conditional_algorithm_rd, rd_at_distortion, robust_rd, BaPoint, RobustResult,
};
use distgen_core::rng::child_seed;

use crate::config::{
    default_jl_grid, BoundsConfig, DataSource, DsvmSweepConfig, FsgldCommandConfig,
    JlValidateConfig, PopulationConfig, RdProblem, RdSolveConfig,
};
use crate::data::{featurize, load_split, Split};
use crate::error::{CliError, Result};
use crate::output::{self, num, summary_csv, sweep_csv, table_csv, to_json, write_file};
use crate::plot::{LineChart, Series};

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Globals {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub synthetic: bool,
    pub plots: bool,
}

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// JSON value written to the run record's deterministic section.
    pub results: serde_json::Value,
    /// Short human-readable report.
    pub report: String,
    /// Effective configuration after command-line overrides.
    pub config: serde_json::Value,
}

fn value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("results serialize")
}

fn prepared(
    data: &crate::config::DataConfig,
    features: Option<&crate::config::FeatureConfig>,
    seed: u64,
) -> Result<Split> {
    let raw = load_split(data, seed)?;
    match features {
        Some(f) => featurize(&raw, f, data.source, seed),
        None => Ok(raw),
    }
}

fn mean_curve(
    cells: &[CellSummary],
    kind: ExperimentKind,
    n: usize,
    f: impl Fn(&SweepRow) -> Option<f64>,
) -> Vec<(f64, f64)> {
    cells
        .iter()
        .filter(|c| c.experiment == kind && c.n == n)
        .filter_map(|c| f(&c.mean).map(|y| (c.k as f64, y)))
        .collect()
}

#[derive(Debug, Serialize)]
struct SweepResults<'a> {
    feature_norm_bound: f64,
    cells: &'a [CellSummary],
}

pub fn dsvm_sweep(mut cfg: DsvmSweepConfig, g: &Globals) -> Result<Outcome> {
    if g.synthetic {
        cfg.data.source = DataSource::Synthetic;
    }
    if let Some(s) = g.seed {
        cfg.sweep.master_seed = s;
    }
    cfg.sweep
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let seed = cfg.sweep.master_seed;
    let split = prepared(&cfg.data, Some(&cfg.features), seed)?;
    let b = split.pool.max_row_norm();
    let rows = sweep(&split.pool, &split.test, &cfg.sweep, b)?;
    let cells = summarize(&rows);

    let mut files = vec![
        write_file(&g.out, "dsvm_sweep.csv", &sweep_csv(&rows)?)?,
        write_file(&g.out, "dsvm_sweep_summary.csv", &summary_csv(&cells)?)?,
    ];
    if g.plots {
        for &n in &cfg.sweep.n_values {
            let mut series = vec![Series::new(
                "distributed gap",
                mean_curve(&cells, ExperimentKind::Dsvm, n, |r| Some(r.gen_gap)),
            )];
            if cfg.sweep.include_centralized {
                series.push(Series::new(
                    "centralized gap",
                    mean_curve(&cells, ExperimentKind::Centralized, n, |r| Some(r.gen_gap)),
                ));
            }
            series.push(
                Series::new(
                    "distributed bound",
                    mean_curve(&cells, ExperimentKind::Dsvm, n, |r| r.bound_expected),
                )
                .dashed(),
            );
            series.push(
                Series::new(
                    "centralized bound",
                    mean_curve(&cells, ExperimentKind::Dsvm, n, |r| r.bound_centralized),
                )
                .dashed(),
            );
            let chart = LineChart {
                title: format!("Generalization error, n = {n}"),
                x_label: "K".into(),
                y_label: "gap".into(),
                log_x: true,
                series,
            };
            let name = if cfg.sweep.n_values.len() == 1 {
                "dsvm_sweep.svg".to_string()
            } else {
                format!("dsvm_sweep_n{n}.svg")
            };
            files.push(write_file(&g.out, &name, &chart.to_svg())?);
        }
    }
    let mut report = String::new();
    for c in &cells {
        report.push_str(&format!(
            "{:<12} K={:<4} n={:<5} gap {:.5} ± {:.5}  pop {:.5}  ΔL̂ {:.5}\n",
            c.experiment.as_str(),
            c.k,
            c.n,
            c.mean.gen_gap,
            c.se.gen_gap,
            c.mean.pop_risk,
            c.mean.delta_emp
        ));
    }
    Ok(Outcome {
        files,
        results: value(&SweepResults {
            feature_norm_bound: b,
            cells: &cells,
        }),
        report,
        config: value(&cfg),
    })
}

#[derive(Debug, Serialize)]
struct LimitEntry {
    n: usize,
    limit: LimitGap,
}

#[derive(Debug, Serialize)]
struct PopulationResults<'a> {
    feature_norm_bound: f64,
    limits: &'a [LimitEntry],
    cells: &'a [CellSummary],
}

pub fn population_study(mut cfg: PopulationConfig, g: &Globals) -> Result<Outcome> {
    if g.synthetic {
        cfg.data.source = DataSource::Synthetic;
    }
    if let Some(s) = g.seed {
        cfg.sweep.master_seed = s;
    }
    cfg.sweep
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    if cfg.limit_replicas < 2 {
        return Err(CliError::Config("limit_replicas must be at least 2".into()));
    }
    let seed = cfg.sweep.master_seed;
    let split = prepared(&cfg.data, Some(&cfg.features), seed)?;
    let b = split.pool.max_row_norm();
    let rows = sweep(&split.pool, &split.test, &cfg.sweep, b)?;
    let cells = summarize(&rows);
    let limits: Vec<LimitEntry> = cfg
        .sweep
        .n_values
        .iter()
        .map(|&n| {
            Ok(LimitEntry {
                n,
                limit: estimate_limit_gap(
                    &split.pool,
                    &split.test,
                    n,
                    &cfg.sweep.sgd,
                    cfg.limit_replicas,
                    child_seed(seed, "limit", n as u64),
                )?,
            })
        })
        .collect::<Result<_>>()?;

    let mut files = vec![
        write_file(&g.out, "population_study.csv", &sweep_csv(&rows)?)?,
        write_file(
            &g.out,
            "population_study_summary.csv",
            &summary_csv(&cells)?,
        )?,
    ];
    let limit_rows: Vec<Vec<String>> = limits
        .iter()
        .map(|l| {
            vec![
                l.n.to_string(),
                l.limit.replicas.to_string(),
                num(l.limit.estimate),
                num(l.limit.se),
            ]
        })
        .collect();
    files.push(write_file(
        &g.out,
        "population_limit.csv",
        &table_csv(&["n", "replicas", "limit_gap", "limit_se"], &limit_rows)?,
    )?);
    if g.plots {
        for l in &limits {
            let n = l.n;
            let ks: Vec<f64> = cfg.sweep.k_values.iter().map(|&k| k as f64).collect();
            let mut series = vec![Series::new(
                "population risk (distributed)",
                mean_curve(&cells, ExperimentKind::Dsvm, n, |r| Some(r.pop_risk)),
            )];
            if cfg.sweep.include_centralized {
                series.push(Series::new(
                    "population risk (centralized)",
                    mean_curve(&cells, ExperimentKind::Centralized, n, |r| Some(r.pop_risk)),
                ));
            }
            series.push(Series::new(
                "empirical risk difference",
                mean_curve(&cells, ExperimentKind::Dsvm, n, |r| Some(r.delta_emp)),
            ));
            series.push(
                Series::new(
                    "K → ∞ limit",
                    ks.iter().map(|&k| (k, l.limit.estimate)).collect(),
                )
                .dashed(),
            );
            let chart = LineChart {
                title: format!("Population risk and empirical risk difference, n = {n}"),
                x_label: "K".into(),
                y_label: "risk".into(),
                log_x: true,
                series,
            };
            let name = if limits.len() == 1 {
                "population_study.svg".to_string()
            } else {
                format!("population_study_n{n}.svg")
            };
            files.push(write_file(&g.out, &name, &chart.to_svg())?);
        }
    }
    let mut report = String::new();
    for c in cells
        .iter()
        .filter(|c| c.experiment == ExperimentKind::Dsvm)
    {
        report.push_str(&format!(
            "K={:<4} n={:<5} ΔL̂ {:.5} ± {:.5}  pop {:.5}\n",
            c.k, c.n, c.mean.delta_emp, c.se.delta_emp, c.mean.pop_risk
        ));
    }
    for l in &limits {
        report.push_str(&format!(
            "limit n={}: {:.5} ± {:.5} ({} replicas)\n",
            l.n, l.limit.estimate, l.limit.se, l.limit.replicas
        ));
    }
    Ok(Outcome {
        files,
        results: value(&PopulationResults {
            feature_norm_bound: b,
            limits: &limits,
            cells: &cells,
        }),
        report,
        config: value(&cfg),
    })
}

#[derive(Debug, Serialize)]
struct FsgldResults<'a> {
    cells: &'a [FsgldCell],
}

pub const FSGLD_HEADER: [&str; 9] = [
    "K",
    "n",
    "replicas",
    "mean_gap",
    "se_gap",
    "mean_pop_risk",
    "bound",
    "bound_within_run",
    "bound_label",
];

pub fn fsgld(mut cfg: FsgldCommandConfig, g: &Globals) -> Result<Outcome> {
    if g.synthetic {
        cfg.data.source = DataSource::Synthetic;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if cfg.k_values.is_empty() || cfg.k_values.contains(&0) {
        return Err(CliError::Config(
            "k_values must be nonempty and positive".into(),
        ));
    }
    if cfg.replicas < 2 {
        return Err(CliError::Config("replicas must be at least 2".into()));
    }
    let split = prepared(&cfg.data, cfg.features.as_ref(), cfg.seed)?;
    let run_cfg = FsgldConfig {
        batch: cfg.batch,
        schedule: FsgldSchedule::constant(cfg.rounds, cfg.eta, cfg.beta),
        init_std: cfg.init_std,
        final_choice: cfg.final_choice,
        seed: cfg.seed,
    };
    let cells: Vec<FsgldCell> = cfg
        .k_values
        .iter()
        .map(|&k| {
            fsgld_cell(
                &split.pool,
                &split.test,
                k,
                cfg.n,
                &run_cfg,
                &Logistic,
                cfg.replicas,
                cfg.sigma,
            )
        })
        .collect::<std::result::Result<_, _>>()?;
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                c.k.to_string(),
                c.n.to_string(),
                c.replicas.to_string(),
                num(c.mean_gap),
                num(c.se_gap),
                num(c.mean_pop_risk),
                num(c.bound),
                num(c.bound_within_run),
                c.bound_label.clone(),
            ]
        })
        .collect();
    let mut files = vec![write_file(
        &g.out,
        "fsgld.csv",
        &table_csv(&FSGLD_HEADER, &rows)?,
    )?];
    if g.plots {
        let pts = |f: &dyn Fn(&FsgldCell) -> f64| {
            cells.iter().map(|c| (c.k as f64, f(c))).collect::<Vec<_>>()
        };
        let chart = LineChart {
            title: format!("FSGLD, n = {}", cfg.n),
            x_label: "K".into(),
            y_label: "gap".into(),
            log_x: true,
            series: vec![
                Series::new("measured gap", pts(&|c| c.mean_gap)),
                Series::new("bound", pts(&|c| c.bound)).dashed(),
            ],
        };
        files.push(write_file(&g.out, "fsgld.svg", &chart.to_svg())?);
    }
    let report = cells
        .iter()
        .map(|c| {
            format!(
                "K={:<4} gap {:.5} ± {:.5}  bound {:.5}  [{}]\n",
                c.k, c.mean_gap, c.se_gap, c.bound, c.bound_label
            )
        })
        .collect();
    Ok(Outcome {
        files,
        results: value(&FsgldResults { cells: &cells }),
        report,
        config: value(&cfg),
    })
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RdSolution {
    Classical { point: BaPoint },
    Algorithm { point: BaPoint },
    Conditional { point: BaPoint },
    Robust { result: RobustResult },
}

pub fn solve_rd(cfg: &RdSolveConfig) -> Result<RdSolution> {
    Ok(match &cfg.problem {
        RdProblem::Classical { instance } => RdSolution::Classical {
            point: rd_at_distortion(instance, &cfg.options)?,
        },
        RdProblem::Algorithm { instance } => RdSolution::Algorithm {
            point: algorithm_rd(instance, &cfg.options)?,
        },
        RdProblem::Conditional { instance } => RdSolution::Conditional {
            point: conditional_algorithm_rd(instance, &cfg.options)?,
        },
        RdProblem::Robust {
            instance,
            delta,
            options,
        } => RdSolution::Robust {
            result: robust_rd(instance, *delta, options)?,
        },
    })
}

pub fn rd_solve(cfg: RdSolveConfig, g: &Globals) -> Result<Outcome> {
    let solution = solve_rd(&cfg)?;
    let report = match &solution {
        RdSolution::Classical { point }
        | RdSolution::Algorithm { point }
        | RdSolution::Conditional { point } => {
            format!(
                "rate {:.10} nats at distortion {:.10} (lower bound {:.10})\n",
                point.rate, point.distortion, point.lower_bound
            )
        }
        RdSolution::Robust { result } => format!(
            "robust value {:.10} (base {:.10}, KL {:.6})\n",
            result.value, result.value_at_base, result.kl
        ),
    };
    let results = value(&solution);
    let echo = serde_json::json!({ "input": value(&cfg), "solution": &results });
    let files = vec![write_file(&g.out, "rd_solve.json", &to_json(&echo))?];
    Ok(Outcome {
        files,
        results,
        report,
        config: value(&cfg),
    })
}

pub const JL_HEADER: [&str; 22] = [
    "m",
    "c1",
    "c2",
    "nu",
    "theta",
    "B",
    "K",
    "epsilon",
    "epsilon_tight",
    "estimate",
    "se",
    "pass",
    "term1",
    "term1_bound",
    "term2",
    "term2_bound",
    "term3",
    "term3_bound",
    "term4",
    "term4_bound",
    "sphere_tail",
    "sphere_tail_bound",
];

fn jl_row(r: &Lemma3Row) -> Vec<String> {
    let p = &r.params;
    let mut v = vec![
        p.m.to_string(),
        num(p.c1),
        num(p.c2),
        num(p.nu),
        num(p.theta),
        num(p.b),
        p.k.to_string(),
        num(r.epsilon.total),
        num(r.epsilon_tight),
        num(r.estimate),
        num(r.se),
        r.pass.to_string(),
    ];
    for t in r.terms.iter().chain(std::iter::once(&r.sphere_tail)) {
        v.push(num(t.empirical));
        v.push(num(t.analytic));
    }
    v
}

pub fn jl_validate(mut cfg: JlValidateConfig, g: &Globals) -> Result<Outcome> {
    if let Some(s) = g.seed {
        cfg.options.seed = s;
    }
    let grid = cfg
        .grid
        .clone()
        .unwrap_or_else(|| default_jl_grid(cfg.options.seed));
    let rows = validate_lemma3(&grid, &cfg.model, &cfg.options)?;
    let table: Vec<Vec<String>> = rows.iter().map(jl_row).collect();
    let files = vec![
        write_file(&g.out, "jl_validate.csv", &table_csv(&JL_HEADER, &table)?)?,
        write_file(&g.out, "jl_validate.json", &to_json(&rows))?,
    ];
    let report = rows
        .iter()
        .map(|r| {
            format!(
                "m={:<4} c1={:.4}  D_A {:.6} ± {:.6}  ε {:.6}  {}\n",
                r.params.m,
                r.params.c1,
                r.estimate,
                r.se,
                r.epsilon.total,
                if r.pass { "pass" } else { "FAIL" }
            )
        })
        .collect();
    Ok(Outcome {
        files,
        results: value(&rows),
        report,
        config: value(&cfg),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizedBound {
    pub params: SvmBoundParams,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub k: usize,
    pub m: usize,
    pub expected: f64,
    pub tail: f64,
    pub centralized: f64,
    pub centralized_tail: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsResults {
    pub report: SvmBoundReport,
    pub epsilon_tight: Option<EpsilonBreakdown>,
    pub centralized: f64,
    pub centralized_tail: f64,
    pub optimized: Option<OptimizedBound>,
    pub curve: Vec<CurvePoint>,
}

pub fn compute_bounds(cfg: &BoundsConfig) -> Result<BoundsResults> {
    let mut p =
        SvmBoundParams::refit(cfg.n, cfg.k, cfg.theta, cfg.b, cfg.delta).with_sigma(cfg.sigma);
    if let Some(m) = cfg.m {
        p.m = m;
    }
    if let Some(c1) = cfg.c1 {
        p.c1 = c1;
    }
    if let Some(c2) = cfg.c2 {
        p.c2 = c2;
    }
    if let Some(nu) = cfg.nu {
        p.nu = nu;
    }
    p.validate()?;
    let report = dsvm_report(&p, true)?;
    let optimized = match cfg.optimize {
        None => None,
        Some(kind) => {
            let (mut params, _) = optimize_svm_bound(
                cfg.n,
                cfg.k,
                cfg.theta,
                cfg.b,
                cfg.delta,
                kind,
                &cfg.optimize_grid,
            )?;
            params.sigma = cfg.sigma;
            let value = match kind {
                distgen_core::bounds::BoundKind::Expected => {
                    distgen_core::bounds::dsvm_expected_bound(&params)?
                }
                distgen_core::bounds::BoundKind::Tail => {
                    distgen_core::bounds::dsvm_tail_bound(&params)?
                }
            };
            Some(OptimizedBound { params, value })
        }
    };
    let curve = cfg
        .k_curve
        .iter()
        .map(|&k| {
            let q =
                SvmBoundParams::refit(cfg.n, k, cfg.theta, cfg.b, cfg.delta).with_sigma(cfg.sigma);
            Ok(CurvePoint {
                k,
                m: q.m,
                expected: distgen_core::bounds::dsvm_expected_bound(&q)?,
                tail: distgen_core::bounds::dsvm_tail_bound(&q)?,
                centralized: centralized_bound(cfg.n, k, cfg.theta, cfg.b, cfg.sigma)?,
                centralized_tail: centralized_tail_bound(
                    cfg.n, k, cfg.theta, cfg.b, cfg.delta, cfg.sigma,
                )?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BoundsResults {
        report,
        epsilon_tight: cfg.tight.then(|| epsilon_terms(&p, true)),
        centralized: centralized_bound(cfg.n, cfg.k, cfg.theta, cfg.b, cfg.sigma)?,
        centralized_tail: centralized_tail_bound(
            cfg.n, cfg.k, cfg.theta, cfg.b, cfg.delta, cfg.sigma,
        )?,
        optimized,
        curve,
    })
}

pub fn bounds(cfg: BoundsConfig, g: &Globals) -> Result<Outcome> {
    let res = compute_bounds(&cfg)?;
    let r = &res.report;
    let e = &r.epsilon;
    let mut report = format!(
        "m={} c1={:.6} c2={:.6} nu={:.6}\nrate {:.10}\nepsilon {:.6e} = {:.6e} + {:.6e} + {:.6e} + {:.6e}\nexpected bound {:.10}\ntail bound {:.10}\ncentralized {:.10} (tail {:.10})\n",
        r.params.m,
        r.params.c1,
        r.params.c2,
        r.params.nu,
        r.rate,
        e.total,
        e.term1,
        e.term2,
        e.term3,
        e.term4,
        r.expected,
        r.tail.unwrap_or(f64::NAN),
        res.centralized,
        res.centralized_tail
    );
    if let Some(o) = &res.optimized {
        report.push_str(&format!("optimized {:.10} at m={}\n", o.value, o.params.m));
    }
    let mut files = vec![write_file(
        &g.out,
        "bounds.json",
        &to_json(&serde_json::json!({ "input": value(&cfg), "results": value(&res) })),
    )?];
    if !res.curve.is_empty() {
        let rows: Vec<Vec<String>> = res
            .curve
            .iter()
            .map(|c| {
                vec![
                    c.k.to_string(),
                    c.m.to_string(),
                    num(c.expected),
                    num(c.tail),
                    num(c.centralized),
                    num(c.centralized_tail),
                ]
            })
            .collect();
        files.push(write_file(
            &g.out,
            "bounds_curve.csv",
            &table_csv(
                &[
                    "K",
                    "m",
                    "expected",
                    "tail",
                    "centralized",
                    "centralized_tail",
                ],
                &rows,
            )?,
        )?);
        if g.plots {
            let pts = |f: &dyn Fn(&CurvePoint) -> f64| {
                res.curve
                    .iter()
                    .map(|c| (c.k as f64, f(c)))
                    .collect::<Vec<_>>()
            };
            let chart = LineChart {
                title: format!("Bounds, n = {}, θ = {}", cfg.n, cfg.theta),
                x_label: "K".into(),
                y_label: "bound".into(),
                log_x: true,
                series: vec![
                    Series::new("distributed", pts(&|c| c.expected)),
                    Series::new("centralized", pts(&|c| c.centralized)),
                    Series::new("distributed (tail)", pts(&|c| c.tail)).dashed(),
                    Series::new("centralized (tail)", pts(&|c| c.centralized_tail)).dashed(),
                ],
            };
            files.push(write_file(&g.out, "bounds_curve.svg", &chart.to_svg())?);
        }
    }
    Ok(Outcome {
        files,
        results: value(&res),
        report,
        config: value(&cfg),
    })
}

/// Writes `<command>.run.json` with the deterministic section and the timing.
pub fn write_record(
    dir: &Path,
    command: &str,
    outcome: &Outcome,
    timing: output::Timing,
) -> Result<PathBuf> {
    let record = output::RunRecord {
        version: output::version_string(),
        deterministic: output::Deterministic {
            command,
            config: &outcome.config,
            results: &outcome.results,
        },
        timing,
    };
    write_file(
        dir,
        &format!("{}.run.json", command.replace('-', "_")),
        &to_json(&record),
    )
}
