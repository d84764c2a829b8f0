//! Full-space baselines: a fixed-step gradient method and Nesterov's
//! cubic-regularized proximal step, plus the shared starting point.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::vector::{axpy, check_dim, dot, norm, norm_sq};
use crate::problems::CubicQuadraticInstance;
use crate::solver::{ExitStatus, IterationRecord, RunTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum BaselineKind {
    /// Gradient step `x − η∇F(x)`.
    CarmonDuchi { eta: f64 },
    /// Exact minimizer of the model with quadratic weight `H`.
    NesterovProx { h: f64 },
}

impl BaselineKind {
    /// Carmon–Duchi with the largest admissible step.
    pub fn carmon_duchi(inst: &CubicQuadraticInstance, norm_a: f64) -> Self {
        BaselineKind::CarmonDuchi { eta: carmon_duchi_eta_max(inst, norm_a) }
    }

    /// Nesterov with `H = ‖A‖`.
    pub fn nesterov(norm_a: f64) -> Self {
        BaselineKind::NesterovProx { h: norm_a }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::CarmonDuchi { .. } => "carmon-duchi",
            BaselineKind::NesterovProx { .. } => "nesterov",
        }
    }

    /// Checks `0 < η ≤ 1/(4‖A‖ + 2MR)` or `H ≥ ‖A‖` against the given norm.
    pub fn validate(&self, inst: &CubicQuadraticInstance, norm_a: f64) -> Result<()> {
        match *self {
            BaselineKind::CarmonDuchi { eta } => {
                let max = carmon_duchi_eta_max(inst, norm_a);
                if !(eta > 0.0 && eta <= max * (1.0 + 1e-12)) {
                    return Err(Error::InvalidParameter(format!("eta = {eta} outside (0, {max}]")));
                }
            }
            BaselineKind::NesterovProx { h } => {
                if !(h >= norm_a * (1.0 - 1e-12)) || h <= 0.0 {
                    return Err(Error::InvalidParameter(format!("H = {h} below ‖A‖ = {norm_a}")));
                }
            }
        }
        Ok(())
    }
}

/// `R = ‖A‖/M + √(‖A‖²/M² + 2‖b‖/M)`.
pub fn level_radius(inst: &CubicQuadraticInstance, norm_a: f64) -> f64 {
    let m = inst.m();
    let t = norm_a / m;
    t + (t * t + 2.0 * norm(inst.b()) / m).sqrt()
}

/// `1/(4‖A‖ + 2MR)`.
pub fn carmon_duchi_eta_max(inst: &CubicQuadraticInstance, norm_a: f64) -> f64 {
    1.0 / (4.0 * norm_a + 2.0 * inst.m() * level_radius(inst, norm_a))
}

/// `(I − ηA − (M/2)η‖x‖I)x − ηb`.
pub fn carmon_duchi_step(inst: &CubicQuadraticInstance, x: &[f64], eta: f64) -> Result<Vec<f64>> {
    let ax = inst.a().matvec(x)?;
    Ok(carmon_duchi_from_ax(inst, x, &ax, eta))
}

fn carmon_duchi_from_ax(inst: &CubicQuadraticInstance, x: &[f64], ax: &[f64], eta: f64) -> Vec<f64> {
    let shrink = 1.0 - 0.5 * eta * inst.m() * norm(x);
    x.iter()
        .zip(ax)
        .zip(inst.b().iter())
        .map(|((xi, axi), bi)| shrink * xi - eta * axi - eta * bi)
        .collect()
}

/// Nesterov's update together with the `μ = ‖x_{k+1}‖` it solves for.
pub fn nesterov_step_with_mu(inst: &CubicQuadraticInstance, x: &[f64], h: f64) -> Result<(Vec<f64>, f64)> {
    let ax = inst.a().matvec(x)?;
    Ok(nesterov_from_ax(inst, x, &ax, h))
}

pub fn nesterov_step(inst: &CubicQuadraticInstance, x: &[f64], h: f64) -> Result<Vec<f64>> {
    nesterov_step_with_mu(inst, x, h).map(|(x, _)| x)
}

fn nesterov_from_ax(inst: &CubicQuadraticInstance, x: &[f64], ax: &[f64], h: f64) -> (Vec<f64>, f64) {
    let m = inst.m();
    let g: Vec<f64> = x
        .iter()
        .zip(ax)
        .zip(inst.b().iter())
        .map(|((xi, axi), bi)| h * xi - axi - bi)
        .collect();
    let gn = norm(&g);
    // Positive root of (M/2)μ² + Hμ − ‖g‖ = 0 without cancellation.
    let mu = 2.0 * gn / (h + (h * h + 2.0 * m * gn).sqrt());
    let scale = 2.0 / (2.0 * h + m * mu);
    (g.into_iter().map(|v| scale * v).collect(), mu)
}

/// `x₀ = −r·b/‖b‖` with `r = −t + √(t² + 2‖b‖/M)`, `t = bᵀAb/(M‖b‖²)`.
pub fn starting_point(inst: &CubicQuadraticInstance) -> Result<Vec<f64>> {
    let b = inst.b();
    let bn_sq = norm_sq(b);
    if bn_sq == 0.0 {
        return Err(Error::DegenerateStart);
    }
    let bn = bn_sq.sqrt();
    let m = inst.m();
    let t = inst.a().quadratic_form(b) / (m * bn_sq);
    let c = 2.0 * bn / m;
    let r = if t > 0.0 { c / (t + (t * t + c).sqrt()) } else { -t + (t * t + c).sqrt() };
    Ok(b.iter().map(|v| -r * v / bn).collect())
}

/// Iterates a baseline from `x0` until `‖∇F‖ ≤ tol` or `max_iter` steps.
///
/// The gradient is checked at every iterate; one product with `A` per step
/// serves the gradient, the objective and the update.
pub fn run_baseline(
    inst: &CubicQuadraticInstance,
    kind: BaselineKind,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<RunTrace> {
    check_dim(inst.dim(), x0.len())?;
    let start = Instant::now();
    let n = inst.dim();
    let m = inst.m();
    let h_f = match kind {
        BaselineKind::CarmonDuchi { eta } => 1.0 / eta,
        BaselineKind::NesterovProx { h } => h,
    };
    let mut x = x0.to_vec();
    let mut ax = vec![0.0; n];
    let mut records = Vec::new();
    let mut k = 0;
    let exit = loop {
        inst.a().matvec_into(&x, &mut ax);
        let r = norm(&x);
        let f = 0.5 * dot(&x, &ax) + dot(inst.b(), &x) + m / 6.0 * r * r * r;
        let mut grad = ax.clone();
        axpy(1.0, inst.b(), &mut grad);
        axpy(0.5 * m * r, &x, &mut grad);
        let gn = norm(&grad);
        let done = if gn <= tol {
            Some(ExitStatus::Converged)
        } else if k == max_iter {
            Some(ExitStatus::MaxIter)
        } else {
            None
        };
        if let Some(exit) = done {
            records.push(IterationRecord::terminal(k, f, Some(gn)));
            break exit;
        }
        let next = match kind {
            BaselineKind::CarmonDuchi { eta } => carmon_duchi_from_ax(inst, &x, &ax, eta),
            BaselineKind::NesterovProx { h } => nesterov_from_ax(inst, &x, &ax, h).0,
        };
        let step: Vec<f64> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
        records.push(IterationRecord {
            k,
            f_value: f,
            step_norm: norm(&step),
            grad_norm: Some(gn),
            aligned: None,
            h_f,
            eta: None,
            h_psi: None,
        });
        x = next;
        k += 1;
    };
    Ok(RunTrace::new(records, exit, k, n, n, start.elapsed().as_secs_f64(), x))
}
