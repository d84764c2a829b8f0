//! Instance generation, method comparisons and end-to-end certificate checks.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{
    self, alignment_count_bound, convex_rate_bound, kl_rate_bound, gradient_rate_bound, BoundParams,
    CertificateReport, KlMode, KlParams, RecurrenceSpec,
};
use crate::cubic::{run_baseline, starting_point, BaselineKind};
use crate::error::{Error, Result};
use crate::problems::{spectral_norm, CubicQuadraticInstance, SparseMatrix, Vector};
use crate::sketch::SketchKind;
use crate::solver::{run_observed, CurvatureMode, ExitStatus, Margin, RunTrace, SolverConfig, StepRule};
use crate::stream_rng;

/// Stream of the run seed used for instance data; sketches use [`SOLVER_STREAM`].
pub const INSTANCE_STREAM: u64 = 0;
pub const SOLVER_STREAM: u64 = 1;
const GAUSSIAN_STREAM: u64 = 2;

/// Expected nonzeros per row of `B` or `C` when no density is given.
pub const DEFAULT_ROW_NNZ: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub n: usize,
    /// Rows of `B` in `A = BᵀB`; `None` gives the indefinite `A = C + Cᵀ`.
    pub m: Option<usize>,
    /// Probability that an entry of `B` or `C` is nonzero.
    #[serde(default)]
    pub density: Option<f64>,
    #[serde(rename = "M")]
    pub reg: f64,
    pub seed: u64,
    /// Added to the diagonal of `A`.
    #[serde(default)]
    pub shift: f64,
}

impl InstanceSpec {
    pub fn convex(n: usize, m: usize, reg: f64, seed: u64) -> Self {
        Self { n, m: Some(m), density: None, reg, seed, shift: 0.0 }
    }

    pub fn nonconvex(n: usize, reg: f64, seed: u64) -> Self {
        Self { n, m: None, density: None, reg, seed, shift: 0.0 }
    }

    pub fn density(&self) -> f64 {
        self.density.unwrap_or((DEFAULT_ROW_NNZ / self.n as f64).min(1.0))
    }
}

/// Sparse Gaussian matrix: each row draws a Binomial number of nonzero
/// positions uniformly without replacement.
fn sparse_gaussian<R: Rng>(rows: usize, cols: usize, density: f64, rng: &mut R) -> Result<SparseMatrix> {
    let binom = Binomial::new(cols as u64, density)
        .map_err(|e| Error::InvalidParameter(format!("density {density}: {e}")))?;
    let (mut r, mut c, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..rows {
        let count = binom.sample(rng) as usize;
        let mut picked = index::sample(rng, cols, count).into_vec();
        picked.sort_unstable();
        for j in picked {
            r.push(i);
            c.push(j);
            v.push(rng.sample::<f64, _>(StandardNormal));
        }
    }
    SparseMatrix::from_triplets(rows, cols, &r, &c, &v)
}

pub fn generate_instance(spec: &InstanceSpec) -> Result<CubicQuadraticInstance> {
    let n = spec.n;
    let density = spec.density();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n must be at least 2, got {n}")));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidParameter(format!("density must lie in (0, 1], got {density}")));
    }
    if spec.m == Some(0) {
        return Err(Error::InvalidParameter("m must be positive".into()));
    }
    let mut rng = stream_rng(spec.seed, INSTANCE_STREAM);
    let mut a = match spec.m {
        Some(m) => sparse_gaussian(m, n, density, &mut rng)?.gram(),
        None => sparse_gaussian(n, n, density, &mut rng)?.plus_transpose()?,
    };
    if spec.shift != 0.0 {
        a = a.add_diagonal(spec.shift)?;
    }
    let b: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    CubicQuadraticInstance::new(a, Vector::new(b)?, spec.reg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Scpg,
    CarmonDuchi,
    Nesterov,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Scpg, Method::CarmonDuchi, Method::Nesterov];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Scpg => "scpg",
            Method::CarmonDuchi => "carmon-duchi",
            Method::Nesterov => "nesterov",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scpg" => Ok(Method::Scpg),
            "carmon-duchi" => Ok(Method::CarmonDuchi),
            "nesterov" => Ok(Method::Nesterov),
            other => Err(Error::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Instance parameters; `seed` is replaced by each entry of `seeds`.
    pub instance: InstanceSpec,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Sketch size; `⌈√n⌉` when absent.
    pub p: Option<usize>,
    pub sketch: SketchKind,
    pub rule: StepRule,
    pub tol: f64,
    pub max_iter: usize,
    pub align_period: usize,
}

impl ExperimentConfig {
    pub fn new(instance: InstanceSpec, seeds: Vec<u64>) -> Self {
        Self {
            instance,
            seeds,
            methods: Method::ALL.to_vec(),
            p: None,
            sketch: SketchKind::CoordinateBlock,
            rule: StepRule::PracticalCurvature,
            tol: 1e-2,
            max_iter: 1_000_000,
            align_period: 10,
        }
    }

    pub fn sketch_size(&self) -> usize {
        self.p.unwrap_or_else(|| (self.instance.n as f64).sqrt().ceil() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tol must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("at least one seed is required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("at least one method is required".into()));
        }
        Ok(())
    }

    pub fn solver_config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            sketch: self.sketch,
            p: self.sketch_size(),
            rule: self.rule,
            tol: self.tol,
            max_iter: self.max_iter,
            seed,
            stream: SOLVER_STREAM,
            align_period: self.align_period,
            alpha: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub exit: Option<ExitStatus>,
    pub iterations: Option<usize>,
    pub epoch_equivalents: Option<f64>,
    pub final_grad_norm: Option<f64>,
    pub wall_time_secs: f64,
    pub error: Option<String>,
}

impl MethodResult {
    fn from_trace(method: Method, trace: &RunTrace) -> Self {
        Self {
            method,
            exit: Some(trace.exit),
            iterations: Some(trace.iterations),
            epoch_equivalents: Some(trace.epoch_equivalents),
            final_grad_norm: trace.final_record().and_then(|r| r.grad_norm),
            wall_time_secs: trace.wall_time_secs,
            error: None,
        }
    }

    fn failed(method: Method, error: impl fmt::Display) -> Self {
        Self {
            method,
            exit: None,
            iterations: None,
            epoch_equivalents: None,
            final_grad_norm: None,
            wall_time_secs: 0.0,
            error: Some(error.to_string()),
        }
    }

    pub fn converged(&self) -> bool {
        self.exit == Some(ExitStatus::Converged)
    }
}

/// Results of every method on one generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub m: Option<usize>,
    pub p: usize,
    #[serde(rename = "M")]
    pub reg: f64,
    pub seed: u64,
    pub results: Vec<MethodResult>,
}

impl ComparisonRow {
    pub fn result(&self, method: Method) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method == method)
    }
}

/// Runs one instance. `‖A‖` comes from power iteration with tolerance 1e-6.
fn compare_on_seed(config: &ExperimentConfig, seed: u64) -> ComparisonRow {
    let spec = InstanceSpec { seed, ..config.instance.clone() };
    let p = config.sketch_size();
    let row = |results| ComparisonRow { n: spec.n, m: spec.m, p, reg: spec.reg, seed, results };
    let prepared = generate_instance(&spec).and_then(|inst| {
        let norm_a = spectral_norm(inst.a(), 1e-6, 5000)?;
        let x0 = match starting_point(&inst) {
            Err(Error::DegenerateStart) => vec![0.0; inst.dim()],
            other => other?,
        };
        Ok((inst, norm_a, x0))
    });
    let (inst, norm_a, x0) = match prepared {
        Ok(v) => v,
        Err(e) => return row(config.methods.iter().map(|&m| MethodResult::failed(m, &e)).collect()),
    };
    let results = config
        .methods
        .iter()
        .map(|&method| {
            let outcome = match method {
                Method::Scpg => run_observed(&inst, &x0, &config.solver_config(seed), |_, _| {})
                    .map_err(|e| e.to_string()),
                Method::CarmonDuchi => {
                    run_baseline(&inst, BaselineKind::carmon_duchi(&inst, norm_a), &x0, config.tol, config.max_iter)
                        .map_err(|e| e.to_string())
                }
                Method::Nesterov => {
                    run_baseline(&inst, BaselineKind::nesterov(norm_a), &x0, config.tol, config.max_iter)
                        .map_err(|e| e.to_string())
                }
            };
            match outcome {
                Ok(trace) => MethodResult::from_trace(method, &trace),
                Err(e) => MethodResult::failed(method, e),
            }
        })
        .collect();
    row(results)
}

/// One row per seed, in seed order; seeds run concurrently.
pub fn run_comparison(config: &ExperimentConfig) -> Result<Vec<ComparisonRow>> {
    config.validate()?;
    Ok(config.seeds.par_iter().map(|&seed| compare_on_seed(config, seed)).collect())
}

/// Long-format CSV, one line per (seed, method). Wall times are left out so
/// that repeated runs produce identical bytes.
pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], mut w: W) -> io::Result<()> {
    writeln!(w, "n,m,p,M,seed,method,exit,iterations,epoch_equivalents,final_grad_norm")?;
    for row in rows {
        for r in &row.results {
            let exit = match (&r.exit, &r.error) {
                (Some(ExitStatus::Converged), _) => "converged",
                (Some(ExitStatus::MaxIter), _) => "max-iter",
                (None, _) => "error",
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                row.n,
                row.m.map(|m| m.to_string()).unwrap_or_else(|| "nonconvex".into()),
                row.p,
                row.reg,
                row.seed,
                r.method,
                exit,
                r.iterations.map(|v| v.to_string()).unwrap_or_default(),
                r.epoch_equivalents.map(|v| format!("{v}")).unwrap_or_default(),
                r.final_grad_norm.map(|v| format!("{v:e}")).unwrap_or_default(),
            )?;
        }
    }
    Ok(())
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 { values[mid] } else { 0.5 * (values[mid - 1] + values[mid]) })
}

/// Summary JSON with per-method medians over seeds.
pub fn comparison_summary(config: &ExperimentConfig, rows: &[ComparisonRow]) -> serde_json::Value {
    let medians: serde_json::Map<String, serde_json::Value> = config
        .methods
        .iter()
        .map(|&method| {
            let results: Vec<&MethodResult> = rows.iter().filter_map(|r| r.result(method)).collect();
            let mut iters: Vec<f64> = results.iter().filter_map(|r| r.iterations.map(|v| v as f64)).collect();
            let mut epochs: Vec<f64> = results.iter().filter_map(|r| r.epoch_equivalents).collect();
            let mut wall: Vec<f64> = results.iter().map(|r| r.wall_time_secs).collect();
            let converged = results.iter().filter(|r| r.converged()).count();
            (
                method.to_string(),
                json!({
                    "median_iterations": median(&mut iters),
                    "median_epoch_equivalents": median(&mut epochs),
                    "median_wall_time_secs": median(&mut wall),
                    "converged": converged,
                    "runs": results.len(),
                }),
            )
        })
        .collect();
    json!({ "config": config, "medians": medians, "rows": rows })
}

/// Minimizer and optimal value from the Nesterov iteration run to
/// `‖∇F‖ ≤ 1e-8`, used as the reference optimum of convex instances.
pub fn reference_optimum(inst: &CubicQuadraticInstance) -> Result<(Vec<f64>, f64)> {
    let norm_a = spectral_norm(inst.a(), 1e-6, 5000)?;
    // A slightly enlarged H keeps the model an upper bound despite the
    // estimate of ‖A‖ being approximate.
    let kind = BaselineKind::nesterov(norm_a * (1.0 + 1e-5) + 1e-12);
    let x0 = match starting_point(inst) {
        Err(Error::DegenerateStart) => vec![0.0; inst.dim()],
        other => other?,
    };
    let trace = run_baseline(inst, kind, &x0, 1e-8, 5_000_000)?;
    if trace.exit != ExitStatus::Converged {
        return Err(Error::Subproblem("reference solve did not reach ‖∇F‖ ≤ 1e-8".into()));
    }
    let f = inst.objective(&trace.x)?;
    Ok((trace.x, f))
}

/// Settings for the end-to-end certificate runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCheckSpec {
    pub instance: InstanceSpec,
    pub p: usize,
    pub iterations: usize,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
}

impl RunCheckSpec {
    /// Convex desk-scale defaults: `p = ⌈√n⌉`, `α = 1/√n`, `β = 0.5`, `δ = 0.1`.
    pub fn desk(n: usize, seed: u64) -> Self {
        let nf = n as f64;
        Self {
            instance: InstanceSpec::convex(n, n, 1.0, seed),
            p: nf.sqrt().ceil() as usize,
            iterations: 2000,
            alpha: 1.0 / nf.sqrt(),
            beta: 0.5,
            delta: 0.1,
        }
    }
}

/// Outcome of checking one bound along one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunBoundCheck {
    pub seed: u64,
    pub iterations: usize,
    pub aligned: usize,
    pub threshold: f64,
    pub threshold_met: bool,
    /// Prefixes `k` at which the aligned count met its threshold and the bound applied.
    pub points_checked: usize,
    pub violations: usize,
    /// Largest `observed / bound` over the checked prefixes.
    pub worst_ratio: f64,
    pub constants: BoundParams,
    /// Theory-mode descent inequality violations beyond 1e-9.
    pub descent_violations: usize,
    /// Gradient-bound violations at aligned steps with the `α²` constant.
    pub gradient_bound_violations: usize,
    /// The same with the `α` constant, reported only.
    pub gradient_bound_violations_alpha: usize,
}

impl RunBoundCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.descent_violations == 0 && self.gradient_bound_violations == 0
    }
}

/// Theory-mode run with a gradient check at every iterate, the reference
/// optimum, and the largest iterate distance to it.
pub struct TheoryRun {
    pub trace: RunTrace,
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub radius: f64,
}

pub fn theory_run(spec: &RunCheckSpec, inst: &CubicQuadraticInstance) -> Result<TheoryRun> {
    let (x_star, f_star) = reference_optimum(inst)?;
    let x0 = starting_point(inst)?;
    let config = SolverConfig {
        sketch: SketchKind::CoordinateBlock,
        p: spec.p,
        rule: StepRule::Theory { mode: CurvatureMode::ConvexAlongSubspaces, margin: Margin::default() },
        tol: f64::MIN_POSITIVE,
        max_iter: spec.iterations,
        seed: spec.instance.seed,
        stream: SOLVER_STREAM,
        align_period: 1,
        alpha: spec.alpha,
    };
    let mut radius = 0.0f64;
    let trace = run_observed(inst, &x0, &config, |_, x| {
        let d: f64 = x.iter().zip(&x_star).map(|(a, b)| (a - b) * (a - b)).sum();
        radius = radius.max(d.sqrt());
    })
    .map_err(|e| e.source)?;
    Ok(TheoryRun { trace, x_star, f_star, radius })
}

/// Telemetry-derived constants `η_min`, `H_f,max`, `H_ψ,max`.
pub fn measured_constants(trace: &RunTrace, alpha: f64, beta: f64, delta: f64) -> Result<BoundParams> {
    let steps = trace.records.iter().filter(|r| r.h_f > 0.0);
    let (mut eta_min, mut h_f_max, mut h_psi_max) = (f64::INFINITY, 0.0f64, 0.0f64);
    for r in steps {
        eta_min = eta_min.min(r.eta.unwrap_or(f64::INFINITY));
        h_f_max = h_f_max.max(r.h_f);
        h_psi_max = h_psi_max.max(r.h_psi.unwrap_or(0.0));
    }
    BoundParams::new(alpha, beta, delta, eta_min, h_f_max, h_psi_max)
}

/// Violations of `F(x_{k+1}) ≤ F(x_k) − (η/2)‖d_k‖²` beyond `1e-9`.
pub fn descent_violations(trace: &RunTrace) -> usize {
    trace
        .records
        .windows(2)
        .filter(|w| match w[0].eta {
            Some(eta) => w[1].f_value > w[0].f_value - 0.5 * eta * w[0].step_norm.powi(2) + 1e-9,
            None => false,
        })
        .count()
}

/// `(η_min/2) Σ ‖d_i‖² − (F(x₀) − F(x_K))`; at most `1e-9` when descent holds.
pub fn telescoping_excess(trace: &RunTrace) -> Option<f64> {
    let eta_min = trace.records.iter().filter_map(|r| r.eta).fold(f64::INFINITY, f64::min);
    let (first, last) = (trace.records.first()?, trace.records.last()?);
    let sum: f64 = trace.records.iter().map(|r| r.step_norm.powi(2)).sum();
    eta_min.is_finite().then(|| 0.5 * eta_min * sum - (first.f_value - last.f_value))
}

/// Counts aligned steps where `‖∇F(x_k)‖² > 2(H_ψ² + H_f²)/α^e ‖d_k‖² + 1e-9`.
pub fn gradient_bound_violations(trace: &RunTrace, alpha: f64, exponent: i32) -> usize {
    trace
        .records
        .iter()
        .filter(|r| r.aligned == Some(true))
        .filter(|r| {
            let (g, hp) = (r.grad_norm.unwrap_or(0.0), r.h_psi.unwrap_or(0.0));
            g * g > 2.0 * (hp * hp + r.h_f * r.h_f) / alpha.powi(exponent) * r.step_norm.powi(2) + 1e-9
        })
        .count()
}

/// Checks `observed(k) ≤ bound(k)` at every prefix `0..=k` of the sketches
/// whose aligned count meets `(1 − β)(1 − δ)(k + 1)`.
fn prefix_check(
    seed: u64,
    trace: &RunTrace,
    params: BoundParams,
    mut observed: impl FnMut(usize) -> f64,
    mut bound: impl FnMut(usize) -> Option<f64>,
) -> RunBoundCheck {
    let flags: Vec<bool> = trace.records.iter().filter_map(|r| r.aligned).collect();
    let (mut count, mut points, mut violations, mut worst) = (0, 0, 0, 0.0f64);
    for (k, &flag) in flags.iter().enumerate() {
        count += usize::from(flag);
        if (count as f64) < alignment_count_bound(params.beta, params.delta, k).threshold {
            continue;
        }
        let Some(b) = bound(k) else { continue };
        let o = observed(k);
        points += 1;
        worst = worst.max(o / b);
        if o > b {
            violations += 1;
        }
    }
    let last = flags.len().saturating_sub(1);
    let threshold = alignment_count_bound(params.beta, params.delta, last).threshold;
    RunBoundCheck {
        seed,
        iterations: flags.len(),
        aligned: count,
        threshold,
        threshold_met: count as f64 >= threshold,
        points_checked: points,
        violations,
        worst_ratio: worst,
        constants: params,
        descent_violations: descent_violations(trace),
        gradient_bound_violations: gradient_bound_violations(trace, params.alpha, 2),
        gradient_bound_violations_alpha: gradient_bound_violations(trace, params.alpha, 1),
    }
}

/// `min_{i ≤ k} ‖∇F(x_i)‖² ≤ gradient_rate_bound(k)` along a theory-mode run.
pub fn gradient_rate_check(spec: &RunCheckSpec, run: &TheoryRun) -> Result<RunBoundCheck> {
    let params = measured_constants(&run.trace, spec.alpha, spec.beta, spec.delta)?;
    let recs = &run.trace.records;
    let gap = recs[0].f_value - run.f_star;
    let mut running_min = f64::INFINITY;
    Ok(prefix_check(
        spec.instance.seed,
        &run.trace,
        params,
        |k| {
            running_min = running_min.min(recs[k].grad_norm.unwrap_or(f64::INFINITY).powi(2));
            running_min
        },
        |k| Some(gradient_rate_bound(&params, gap, k)),
    ))
}

/// `F(x_{k+1}) − F* ≤ convex_rate_bound(k)` with `R` the largest iterate
/// distance to the reference minimizer.
pub fn convex_rate_check(spec: &RunCheckSpec, run: &TheoryRun) -> Result<RunBoundCheck> {
    let params = measured_constants(&run.trace, spec.alpha, spec.beta, spec.delta)?;
    let recs = &run.trace.records;
    Ok(prefix_check(
        spec.instance.seed,
        &run.trace,
        params,
        |k| recs[k + 1].f_value - run.f_star,
        |k| convex_rate_bound(&params, run.radius, k).ok(),
    ))
}

/// Linear-rate check on `A ⪰ λI`: `F` is uniformly convex of order 2 and
/// `σ₂ = λ/2` is used as a conservative modulus.
pub fn kl_linear_check(spec: &RunCheckSpec, run: &TheoryRun) -> Result<RunBoundCheck> {
    let lambda = spec.instance.shift;
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("the linear-rate check needs a positive diagonal shift".into()));
    }
    let params = measured_constants(&run.trace, spec.alpha, spec.beta, spec.delta)?;
    let kl = KlParams::new(2.0, 0.5 * lambda, KlMode::UniformlyConvex, params.c(), spec.beta, spec.delta)?;
    let recs = &run.trace.records;
    let gap0 = recs[0].f_value - run.f_star;
    Ok(prefix_check(
        spec.instance.seed,
        &run.trace,
        params,
        |k| recs[k + 1].f_value - run.f_star,
        |k| kl_rate_bound(&kl, gap0, k).ok(),
    ))
}

/// Settings for [`validate_certificates`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyConfig {
    pub seed: u64,
    pub chernoff_trials: usize,
    pub grid: usize,
    pub y_max: f64,
    pub recurrence_draws: usize,
    pub recurrence_k: usize,
    /// Seeds of the end-to-end runs; empty skips them.
    pub run_seeds: Vec<u64>,
    pub n: usize,
    pub iterations: usize,
    /// Diagonal shift of the instances in the linear-rate check.
    pub lambda: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            chernoff_trials: 100_000,
            grid: 1000,
            y_max: 20.0,
            recurrence_draws: 50,
            recurrence_k: 10_000,
            run_seeds: (0..5).collect(),
            n: 2000,
            iterations: 2000,
            lambda: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSuite {
    pub reports: Vec<CertificateReport>,
    pub all_validated: bool,
}

pub const CHERNOFF_BETAS: [f64; 3] = [0.3, 0.5, 0.62];
pub const CHERNOFF_DELTAS: [f64; 3] = [0.05, 0.1, 0.5];
pub const CHERNOFF_KS: [usize; 3] = [50, 100, 500];

/// Random `(ζ, c, Δ₀)` draws for each recurrence case.
pub fn recurrence_draws(draws: usize, seed: u64) -> Vec<RecurrenceSpec> {
    let mut rng = stream_rng(seed, 7);
    let mut specs = Vec::with_capacity(3 * draws);
    for _ in 0..draws {
        specs.push(RecurrenceSpec { zeta: rng.random_range(0.05..3.0), c: 1.0, delta0: rng.random_range(0.01..0.99) });
        specs.push(RecurrenceSpec { zeta: 0.0, c: rng.random_range(0.01..0.99), delta0: rng.random_range(0.01..100.0) });
        specs.push(RecurrenceSpec {
            zeta: rng.random_range(-0.95..-0.05),
            c: rng.random_range(0.01..0.5),
            delta0: rng.random_range(1.0..100.0),
        });
    }
    specs
}

/// Runs every certificate check and collects one report per bound.
pub fn validate_certificates(config: &CertifyConfig) -> CertificateSuite {
    let mut reports = Vec::new();

    for (i, &delta) in CHERNOFF_DELTAS.iter().enumerate() {
        for (j, &k) in CHERNOFF_KS.iter().enumerate() {
            let counts = analysis::simulate_aligned_counts(delta, k, config.chernoff_trials, config.seed + (3 * i + j) as u64);
            for &beta in &CHERNOFF_BETAS {
                let c = analysis::chernoff_check(beta, delta, k, &counts);
                reports.push(CertificateReport {
                    bound_name: "alignment-count".into(),
                    params: json!({ "beta": beta, "delta": delta, "K": k, "trials": c.trials }),
                    value: c.prob_floor,
                    validated: c.passed,
                    evidence: json!({
                        "threshold": c.threshold,
                        "prob_floor": c.prob_floor,
                        "empirical": c.empirical,
                        "std_error": c.std_error,
                    }),
                });
            }
        }
    }

    let grid = analysis::scalar_inequality_grid(config.grid, config.grid, config.y_max);
    reports.push(CertificateReport {
        bound_name: "scalar-inequality".into(),
        params: json!({ "grid_p": config.grid, "grid_y": config.grid, "y_max": config.y_max }),
        value: grid.max_violation,
        validated: grid.max_violation <= 1e-12,
        evidence: json!({ "max_lhs_minus_rhs": grid.max_violation, "argmax": grid.argmax, "points": grid.points }),
    });

    let specs = recurrence_draws(config.recurrence_draws, config.seed);
    for case in ["sublinear", "linear", "superlinear"] {
        let worst = specs
            .iter()
            .filter(|s| s.case().map(|c| format!("{c:?}").to_lowercase() == case).unwrap_or(false))
            .map(|s| analysis::recurrence_max_violation(s, config.recurrence_k).unwrap_or(f64::INFINITY))
            .fold(f64::NEG_INFINITY, f64::max);
        reports.push(CertificateReport {
            bound_name: format!("recurrence-{case}"),
            params: json!({ "draws": config.recurrence_draws, "k_max": config.recurrence_k }),
            value: worst,
            validated: worst <= 1e-12,
            evidence: json!({ "max_relative_violation": worst }),
        });
    }

    let run_reports: Vec<Vec<CertificateReport>> = config
        .run_seeds
        .par_iter()
        .map(|&seed| end_to_end_reports(config, seed))
        .collect();
    reports.extend(run_reports.into_iter().flatten());

    let all_validated = reports.iter().all(|r| r.validated);
    CertificateSuite { reports, all_validated }
}

fn check_report(name: &str, spec: &RunCheckSpec, check: Result<RunBoundCheck>) -> CertificateReport {
    let params = json!({ "seed": spec.instance.seed, "n": spec.instance.n, "p": spec.p,
        "alpha": spec.alpha, "beta": spec.beta, "delta": spec.delta, "K": spec.iterations });
    match check {
        Ok(c) => CertificateReport {
            bound_name: name.into(),
            params,
            value: c.worst_ratio,
            validated: c.passed(),
            evidence: serde_json::to_value(&c).unwrap_or_default(),
        },
        Err(e) => CertificateReport {
            bound_name: name.into(),
            params,
            value: f64::NAN,
            validated: false,
            evidence: json!({ "error": e.to_string() }),
        },
    }
}

fn end_to_end_reports(config: &CertifyConfig, seed: u64) -> Vec<CertificateReport> {
    let mut spec = RunCheckSpec::desk(config.n, seed);
    spec.iterations = config.iterations;
    let mut out = Vec::new();
    match generate_instance(&spec.instance).and_then(|inst| theory_run(&spec, &inst)) {
        Ok(run) => {
            out.push(check_report("gradient-rate-run", &spec, gradient_rate_check(&spec, &run)));
            out.push(check_report("convex-rate-run", &spec, convex_rate_check(&spec, &run)));
        }
        Err(e) => {
            out.push(check_report("gradient-rate-run", &spec, Err(e.clone())));
            out.push(check_report("convex-rate-run", &spec, Err(e)));
        }
    }
    let mut kl_spec = spec.clone();
    kl_spec.instance.shift = config.lambda;
    let kl = generate_instance(&kl_spec.instance)
        .and_then(|inst| theory_run(&kl_spec, &inst))
        .and_then(|run| kl_linear_check(&kl_spec, &run));
    out.push(check_report("linear-rate-run", &kl_spec, kl));
    out
}

/// Standard normal vector from a dedicated stream of `seed`.
pub fn gaussian_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, GAUSSIAN_STREAM);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Median of a sequence, averaging the middle pair for even lengths.
pub fn median_of(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    median(&mut v)
}
