//! The cubic-regularized quadratic as a composite problem
//! (`f(x) = ½xᵀAx + bᵀx`, `ψ(x) = (M/6)‖x‖³`), its sketched subproblem
//! and the full-space baselines.

pub mod baselines;
pub mod prox;
pub mod quartic;

use nalgebra::DMatrix;

pub use baselines::{
    carmon_duchi_eta_max, carmon_duchi_step, nesterov_step, nesterov_step_with_mu, run_baseline,
    starting_point, BaselineKind,
};
pub use prox::{cubic_prox_general, cubic_prox_orthonormal, sketched_cubic_prox, ProxSolution};
pub use quartic::{solve_quartic_ferrari, solve_quartic_real_roots, QuarticCoefficients};

use crate::error::Result;
use crate::problems::vector::{dot, norm, norm_sq};
use crate::problems::{CompositeProblem, CubicQuadraticInstance};
use crate::sketch::Sketch;

/// `Uᵀ(Ax + b)`; a coordinate block only touches the rows in `S`.
pub fn sketched_smooth_gradient(inst: &CubicQuadraticInstance, x: &[f64], u: &Sketch) -> Result<Vec<f64>> {
    match u.block_indices() {
        Some(s) => {
            crate::problems::vector::check_dim(inst.dim(), x.len())?;
            Ok(s.iter().map(|&i| inst.a().row_dot(i, x) + inst.b()[i]).collect())
        }
        None => u.apply_transpose(&CompositeProblem::smooth_gradient(inst, x)),
    }
}

/// Largest eigenvalue magnitude of a small symmetric matrix.
pub fn symmetric_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().symmetric_eigenvalues().iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

impl CompositeProblem for CubicQuadraticInstance {
    fn dim(&self) -> usize {
        CubicQuadraticInstance::dim(self)
    }

    fn smooth_value(&self, x: &[f64]) -> f64 {
        0.5 * self.a().quadratic_form(x) + dot(self.b(), x)
    }

    fn smooth_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.a().matvec_into(x, &mut g);
        g.iter_mut().zip(self.b().iter()).for_each(|(gi, bi)| *gi += bi);
        g
    }

    fn psi_value(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        self.m() / 6.0 * r * r * r
    }

    fn psi_gradient(&self, x: &[f64]) -> Vec<f64> {
        let s = 0.5 * self.m() * norm(x);
        x.iter().map(|v| s * v).collect()
    }

    fn sketched_smooth_gradient(&self, x: &[f64], u: &Sketch) -> Result<Vec<f64>> {
        sketched_smooth_gradient(self, x, u)
    }

    fn subspace_prox(&self, x: &[f64], g: &[f64], u: &Sketch, h: f64) -> Result<Vec<f64>> {
        let sol = if u.has_orthonormal_columns() {
            cubic_prox_orthonormal(self.m(), x, u, g, h)?
        } else {
            cubic_prox_general(self.m(), x, u, g, h)?
        };
        Ok(sol.d)
    }

    /// `‖UᵀAU‖`, which is the exact `L_U` of a quadratic.
    fn smooth_curvature(&self, u: &Sketch) -> Result<f64> {
        Ok(symmetric_norm(&u.sandwich(self.a())?))
    }

    /// `‖Uᵀ∇²ψ(x)U‖` with `∇²ψ(x) = (M/2)(‖x‖I + xxᵀ/‖x‖)`.
    fn psi_curvature(&self, x: &[f64], u: &Sketch) -> Result<f64> {
        let r = norm(x);
        if r == 0.0 {
            return Ok(0.0);
        }
        let v = u.apply_transpose(x)?;
        let half_m = 0.5 * self.m();
        if u.has_orthonormal_columns() {
            return Ok(half_m * (r + norm_sq(&v) / r));
        }
        let p = v.len();
        let v = DMatrix::from_column_slice(p, 1, &v);
        let hess = (u.gram() * r + &v * v.transpose() / r) * half_m;
        Ok(symmetric_norm(&hess))
    }
}
