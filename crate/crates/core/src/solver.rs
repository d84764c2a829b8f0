//! The stochastic coordinate proximal gradient loop.
//!
//! Each iteration samples a sketch `U_k`, picks a step constant `H_{f,U_k}`,
//! solves the sketched prox subproblem for `d_k` and moves to
//! `x_{k+1} = x_k + U_k d_k`. Full gradients are only formed every
//! `align_period` iterations, for the stopping test and alignment telemetry.

use std::io::{self, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::vector::{check_dim, norm};
use crate::problems::CompositeProblem;
use crate::sketch::{is_well_aligned, sample_with, Sketch, SketchKind};
use crate::stream_rng;

/// Smallest step constant handed to a prox oracle.
pub const MIN_STEP_CONSTANT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureMode {
    /// `H = (L_U + η)/2`, valid when `f` is convex along every subspace.
    ConvexAlongSubspaces,
    /// `H = L_U + η`.
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Margin {
    Absolute(f64),
    /// `η_U = factor · L_U`, floored at [`MIN_STEP_CONSTANT`].
    Relative(f64),
}

impl Default for Margin {
    fn default() -> Self {
        Margin::Relative(1e-3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum StepRule {
    Theory { mode: CurvatureMode, margin: Margin },
    /// `H = ‖UᵀAU‖ = L_U` with no margin.
    PracticalCurvature,
}

impl StepRule {
    pub fn theory(mode: CurvatureMode) -> Self {
        StepRule::Theory { mode, margin: Margin::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepChoice {
    pub h: f64,
    pub l_u: f64,
    /// Descent margin `η_U`; `None` in practical mode.
    pub eta: Option<f64>,
}

pub fn choose_step_constant(rule: &StepRule, problem: &dyn CompositeProblem, u: &Sketch) -> Result<StepChoice> {
    let l_u = problem.smooth_curvature(u)?;
    let choice = match *rule {
        StepRule::PracticalCurvature => StepChoice { h: l_u, l_u, eta: None },
        StepRule::Theory { mode, margin } => {
            let eta = match margin {
                Margin::Absolute(v) => v,
                Margin::Relative(f) => (f * l_u).max(MIN_STEP_CONSTANT),
            };
            if !(eta > 0.0) {
                return Err(Error::InvalidParameter(format!("margin must be positive, got {eta}")));
            }
            let h = match mode {
                CurvatureMode::ConvexAlongSubspaces => 0.5 * (l_u + eta),
                CurvatureMode::General => l_u + eta,
            };
            StepChoice { h, l_u, eta: Some(eta) }
        }
    };
    Ok(StepChoice { h: choice.h.max(MIN_STEP_CONSTANT), ..choice })
}

/// One step: returns `d` and `x + Ud`.
pub fn scpg_step(problem: &dyn CompositeProblem, x: &[f64], u: &Sketch, h_f: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(h_f > 0.0) {
        return Err(Error::InvalidParameter(format!("H_f must be positive, got {h_f}")));
    }
    let g = problem.sketched_smooth_gradient(x, u)?;
    let d = problem.subspace_prox(x, &g, u, h_f)?;
    let mut next = x.to_vec();
    u.apply_add(&d, &mut next);
    Ok((d, next))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub sketch: SketchKind,
    pub p: usize,
    pub rule: StepRule,
    /// Stop once `‖∇F(x_k)‖ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Stream of `seed` used for this run's sketches.
    pub stream: u64,
    /// Gradient checks happen every `align_period` iterations.
    pub align_period: usize,
    pub alpha: f64,
}

impl SolverConfig {
    pub fn new(sketch: SketchKind, p: usize, rule: StepRule) -> Self {
        Self {
            sketch,
            p,
            rule,
            tol: 1e-2,
            max_iter: 100_000,
            seed: 0,
            stream: 0,
            align_period: 10,
            alpha: 0.5,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tol must be positive".into()));
        }
        if self.max_iter == 0 || self.align_period == 0 {
            return Err(Error::InvalidParameter("max_iter and align_period must be at least 1".into()));
        }
        if self.p == 0 || self.p > n {
            return Err(Error::InvalidParameter(format!("p = {} not in 1..={n}", self.p)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter("alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Telemetry for the transition `x_k → x_{k+1}`, or the final iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `F(x_k)`.
    pub f_value: f64,
    pub step_norm: f64,
    /// `‖∇F(x_k)‖` on gradient-check iterations.
    pub grad_norm: Option<f64>,
    /// Whether `U_k` was well aligned with `∇F(x_k)`, on gradient-check iterations.
    pub aligned: Option<bool>,
    pub h_f: f64,
    pub eta: Option<f64>,
    /// Larger of `‖U_kᵀ∇²ψ U_k‖` at `x_k` and `x_{k+1}`, on gradient-check iterations.
    pub h_psi: Option<f64>,
}

impl IterationRecord {
    pub fn terminal(k: usize, f_value: f64, grad_norm: Option<f64>) -> Self {
        Self { k, f_value, step_norm: 0.0, grad_norm, aligned: None, h_f: 0.0, eta: None, h_psi: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitStatus {
    Converged,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    pub exit: ExitStatus,
    pub iterations: usize,
    /// `iterations · p / n`.
    pub epoch_equivalents: f64,
    pub wall_time_secs: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub exit: ExitStatus,
    pub iterations: usize,
    pub epoch_equivalents: f64,
    pub wall_time_secs: f64,
    pub final_objective: f64,
    pub final_grad_norm: Option<f64>,
}

impl RunTrace {
    pub fn new(
        records: Vec<IterationRecord>,
        exit: ExitStatus,
        iterations: usize,
        n: usize,
        p: usize,
        wall_time_secs: f64,
        x: Vec<f64>,
    ) -> Self {
        let epoch_equivalents = iterations as f64 * p as f64 / n as f64;
        Self { records, exit, iterations, epoch_equivalents, wall_time_secs, x }
    }

    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn summary(&self) -> RunSummary {
        let last = self.final_record();
        RunSummary {
            exit: self.exit,
            iterations: self.iterations,
            epoch_equivalents: self.epoch_equivalents,
            wall_time_secs: self.wall_time_secs,
            final_objective: last.map_or(f64::NAN, |r| r.f_value),
            final_grad_norm: last.and_then(|r| r.grad_norm),
        }
    }

    /// Columns `k,F,step_norm,grad_norm,aligned,H_f`; absent values are empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,F,step_norm,grad_norm,aligned,H_f")?;
        for r in &self.records {
            let gn = r.grad_norm.map(|v| format!("{v:e}")).unwrap_or_default();
            let al = r.aligned.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{},{:e},{:e},{},{},{:e}", r.k, r.f_value, r.step_norm, gn, al, r.h_f)?;
        }
        Ok(())
    }
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug, thiserror::Error)]
#[error("run aborted at iteration {}: {source}", trace.iterations)]
pub struct SolverError {
    pub source: Error,
    pub trace: Box<RunTrace>,
}

/// Runs the method from `x0`.
///
/// The gradient is checked at `k = 0, T, 2T, …` and at `max_iter`; the run
/// stops at the first check with `‖∇F‖ ≤ tol`.
pub fn run(problem: &dyn CompositeProblem, x0: &[f64], config: &SolverConfig) -> Result<RunTrace, SolverError> {
    run_observed(problem, x0, config, |_, _| {})
}

/// [`run`], calling `observe(k, x_k)` on every iterate including the last.
pub fn run_observed(
    problem: &dyn CompositeProblem,
    x0: &[f64],
    config: &SolverConfig,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<RunTrace, SolverError> {
    let start = Instant::now();
    let n = problem.dim();
    let abort = |source: Error, records: Vec<IterationRecord>, k: usize, x: Vec<f64>| SolverError {
        source,
        trace: Box::new(RunTrace::new(records, ExitStatus::MaxIter, k, n, config.p, start.elapsed().as_secs_f64(), x)),
    };
    if let Err(e) = check_dim(n, x0.len()).and_then(|_| config.validate(n)) {
        return Err(abort(e, Vec::new(), 0, x0.to_vec()));
    }

    let mut rng = stream_rng(config.seed, config.stream);
    let mut x = x0.to_vec();
    let mut f = problem.objective(&x);
    let mut records = Vec::new();
    let mut k = 0;
    let exit = loop {
        observe(k, &x);
        let check = k % config.align_period == 0 || k == config.max_iter;
        let grad = check.then(|| problem.gradient(&x));
        let grad_norm = grad.as_deref().map(norm);
        if grad_norm.is_some_and(|g| g <= config.tol) {
            records.push(IterationRecord::terminal(k, f, grad_norm));
            break ExitStatus::Converged;
        }
        if k == config.max_iter {
            records.push(IterationRecord::terminal(k, f, grad_norm));
            break ExitStatus::MaxIter;
        }

        let step = (|| -> Result<_> {
            let u = sample_with(config.sketch, n, config.p, &mut rng)?;
            let aligned = grad.as_deref().map(|g| is_well_aligned(&u, g, config.alpha)).transpose()?;
            let choice = choose_step_constant(&config.rule, problem, &u)?;
            let (d, next) = scpg_step(problem, &x, &u, choice.h)?;
            let h_psi = if check {
                Some(problem.psi_curvature(&x, &u)?.max(problem.psi_curvature(&next, &u)?))
            } else {
                None
            };
            Ok((aligned, choice, d, next, h_psi))
        })();
        let (aligned, choice, d, next, h_psi) = match step {
            Ok(s) => s,
            Err(e) => return Err(abort(e, records, k, x)),
        };
        records.push(IterationRecord {
            k,
            f_value: f,
            step_norm: norm(&d),
            grad_norm,
            aligned,
            h_f: choice.h,
            eta: choice.eta,
            h_psi,
        });
        x = next;
        f = problem.objective(&x);
        k += 1;
    };
    Ok(RunTrace::new(records, exit, k, n, config.p, start.elapsed().as_secs_f64(), x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTelemetry {
    pub count_aligned: usize,
    pub checks: usize,
    pub fraction: f64,
    pub min_grad_norm: f64,
}

/// Aligned count among the recorded checks and the smallest recorded `‖∇F‖`.
pub fn alignment_telemetry(trace: &RunTrace) -> Result<AlignmentTelemetry> {
    let min_grad_norm = trace
        .records
        .iter()
        .filter_map(|r| r.grad_norm)
        .fold(f64::INFINITY, f64::min);
    if !min_grad_norm.is_finite() {
        return Err(Error::NoTelemetry);
    }
    let flags: Vec<bool> = trace.records.iter().filter_map(|r| r.aligned).collect();
    let count_aligned = flags.iter().filter(|&&a| a).count();
    let fraction = if flags.is_empty() { f64::NAN } else { count_aligned as f64 / flags.len() as f64 };
    Ok(AlignmentTelemetry { count_aligned, checks: flags.len(), fraction, min_grad_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::FnProblem;

    fn diag_quadratic(diag: Vec<f64>) -> FnProblem {
        let d1 = diag.clone();
        let d2 = diag.clone();
        let n = diag.len();
        FnProblem::smooth(
            n,
            move |x| 0.5 * x.iter().zip(&d1).map(|(v, a)| a * v * v).sum::<f64>(),
            move |x| x.iter().zip(&d2).map(|(v, a)| a * v).collect(),
        )
        .with_smooth_curvature(move |u| {
            u.block_indices().unwrap().iter().map(|&i| diag[i].abs()).fold(0.0, f64::max)
        })
    }

    #[test]
    fn step_constant_formulas() {
        let prob = diag_quadratic(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let u = Sketch::block(5, vec![0, 3]).unwrap();
        let convex = StepRule::Theory { mode: CurvatureMode::ConvexAlongSubspaces, margin: Margin::Absolute(2.0) };
        let general = StepRule::Theory { mode: CurvatureMode::General, margin: Margin::Absolute(2.0) };
        assert_eq!(choose_step_constant(&convex, &prob, &u).unwrap().h, 3.0);
        assert_eq!(choose_step_constant(&general, &prob, &u).unwrap().h, 6.0);
        let practical = choose_step_constant(&StepRule::PracticalCurvature, &prob, &u).unwrap();
        assert_eq!((practical.h, practical.eta), (4.0, None));
    }

    #[test]
    fn quadratic_step_is_scaled_gradient() {
        let prob = diag_quadratic(vec![2.0, 4.0]);
        let u = Sketch::block(2, vec![1]).unwrap();
        let (d, next) = scpg_step(&prob, &[1.0, 1.0], &u, 4.0).unwrap();
        assert_eq!(d, vec![-1.0]);
        assert_eq!(next, vec![1.0, 0.0]);
    }

    #[test]
    fn stationary_start_converges_immediately() {
        let prob = diag_quadratic(vec![1.0, 1.0, 1.0]);
        let cfg = SolverConfig::new(SketchKind::CoordinateBlock, 1, StepRule::PracticalCurvature);
        let t = run(&prob, &[0.0; 3], &cfg).unwrap();
        assert_eq!((t.exit, t.iterations), (ExitStatus::Converged, 0));
    }

    #[test]
    fn runs_are_reproducible() {
        let prob = diag_quadratic(vec![1.0, 3.0, 0.5, 2.0]);
        let mut cfg = SolverConfig::new(SketchKind::CoordinateBlock, 2, StepRule::theory(CurvatureMode::General));
        cfg.tol = 1e-8;
        cfg.seed = 42;
        let a = run(&prob, &[1.0, -1.0, 2.0, 0.5], &cfg).unwrap();
        let b = run(&prob, &[1.0, -1.0, 2.0, 0.5], &cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.exit, ExitStatus::Converged);
        assert!(a.final_record().unwrap().grad_norm.unwrap() <= 1e-8);
        assert_eq!(a.epoch_equivalents, a.iterations as f64 * 0.5);
    }

    #[test]
    fn csv_leaves_missing_cells_empty() {
        let trace = RunTrace::new(
            vec![IterationRecord::terminal(0, 1.5, None)],
            ExitStatus::MaxIter,
            0,
            4,
            2,
            0.0,
            vec![0.0; 4],
        );
        let mut out = Vec::new();
        trace.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "k,F,step_norm,grad_norm,aligned,H_f\n0,1.5e0,0e0,,,0e0\n");
        assert_eq!(alignment_telemetry(&trace), Err(Error::NoTelemetry));
    }
}
