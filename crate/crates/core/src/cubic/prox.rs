//! Sketched proximal step for the cubic regularizer.
//!
//! Solves `min_d ⟨g, d⟩ + (H/2)‖d‖² + (M/6)‖x + Ud‖³` with `g = Uᵀ∇f(x)`.
//! Stationarity reads `g + Hd + (M/2)μ Uᵀ(x + Ud) = 0` with `μ = ‖x + Ud‖`.

use nalgebra::{DMatrix, DVector};

use super::quartic::{solve_quartic_real_roots, QuarticCoefficients};
use crate::error::{Error, Result};
use crate::problems::vector::{dot, norm, norm_sq};
use crate::problems::CubicQuadraticInstance;
use crate::sketch::Sketch;

#[derive(Debug, Clone, PartialEq)]
pub struct ProxSolution {
    pub d: Vec<f64>,
    /// `‖x + Ud‖` at the solution.
    pub mu: f64,
}

/// Value of the sketched subproblem at `d`.
pub fn subproblem_value(m: f64, x: &[f64], u: &Sketch, g: &[f64], h: f64, d: &[f64]) -> Result<f64> {
    let mut y = x.to_vec();
    u.apply_add(d, &mut y);
    let r = norm(&y);
    Ok(dot(g, d) + 0.5 * h * norm_sq(d) + m / 6.0 * r * r * r)
}

/// `‖x − UUᵀx‖²` computed directly rather than by subtraction.
fn complement_norm_sq(x: &[f64], u: &Sketch, ux: &[f64]) -> f64 {
    match u.block_indices() {
        Some(s) => {
            let mut total = 0.0;
            let mut next = s.iter().peekable();
            for (i, xi) in x.iter().enumerate() {
                if next.peek() == Some(&&i) {
                    next.next();
                } else {
                    total += xi * xi;
                }
            }
            total
        }
        None => {
            let mut r = x.to_vec();
            let neg: Vec<f64> = ux.iter().map(|v| -v).collect();
            u.apply_add(&neg, &mut r);
            norm_sq(&r)
        }
    }
}

/// Prox for sketches with orthonormal columns via the quartic norm equation.
///
/// With `UᵀU = I` the stationarity condition gives
/// `d(μ) = −(2g + MμUᵀx)/(2H + Mμ)`, and `‖x + Ud(μ)‖ = μ` reduces to a
/// quartic in `μ`. Among its nonnegative roots the one with the smallest
/// subproblem value is taken, ties going to the smaller `‖d‖`.
pub fn cubic_prox_orthonormal(m: f64, x: &[f64], u: &Sketch, g: &[f64], h: f64) -> Result<ProxSolution> {
    if !u.has_orthonormal_columns() {
        return Err(Error::Subproblem(format!("{} sketch does not have orthonormal columns", u.kind())));
    }
    if !(h > 0.0 && m > 0.0) {
        return Err(Error::Subproblem(format!("need H > 0 and M > 0, got H = {h}, M = {m}")));
    }
    let ux = u.apply_transpose(x)?;
    let xc_sq = complement_norm_sq(x, u, &ux);
    let w: Vec<f64> = ux.iter().zip(g).map(|(a, gi)| h * a - gi).collect();
    let quartic = QuarticCoefficients::cubic_subproblem(h, m, norm_sq(&w), xc_sq);
    let roots = solve_quartic_real_roots(&quartic)
        .map_err(|e| Error::Subproblem(format!("norm equation: {e}")))?;

    let d_of = |mu: f64| -> Vec<f64> {
        let denom = 2.0 * h + m * mu;
        g.iter().zip(&ux).map(|(gi, a)| -(2.0 * gi + m * mu * a) / denom).collect()
    };
    // Roots are ≥ ‖x − UUᵀx‖ in exact arithmetic; admit rounding below zero.
    let floor = -1e-12 * roots.iter().fold(1.0f64, |acc, r| acc.max(r.abs()));
    let mut best: Option<(f64, f64, ProxSolution)> = None;
    for mu in roots.into_iter().filter(|&r| r >= floor).map(|r| r.max(0.0)) {
        let d = d_of(mu);
        let value = subproblem_value(m, x, u, g, h, &d)?;
        let dn = norm(&d);
        let better = match &best {
            None => true,
            Some((bv, bn, _)) => value < *bv || (value == *bv && dn < *bn),
        };
        if better {
            best = Some((value, dn, ProxSolution { d, mu }));
        }
    }
    let (_, _, sol) = best.ok_or_else(|| {
        Error::Subproblem(format!("no nonnegative root of {:?}", quartic.as_array()))
    })?;

    let consistent = (ux.iter().zip(&sol.d).map(|(a, b)| (a + b) * (a + b)).sum::<f64>() + xc_sq).sqrt();
    if (consistent - sol.mu).abs() > 1e-6 * sol.mu.max(1.0) {
        return Err(Error::Subproblem(format!(
            "self-consistency violated: ‖x + Ud‖ = {consistent}, μ = {}",
            sol.mu
        )));
    }
    Ok(sol)
}

/// Prox for an arbitrary sketch.
///
/// For fixed `μ`, stationarity is the linear system
/// `(H·I + (M/2)μ UᵀU) d = −g − (M/2)μ Uᵀx`. The subproblem is strictly
/// convex, so `φ(μ) = ‖x + Ud(μ)‖ − μ` has a single root, found by bisection.
pub fn cubic_prox_general(m: f64, x: &[f64], u: &Sketch, g: &[f64], h: f64) -> Result<ProxSolution> {
    if !(h > 0.0 && m > 0.0) {
        return Err(Error::Subproblem(format!("need H > 0 and M > 0, got H = {h}, M = {m}")));
    }
    let p = u.p();
    let gram = u.gram();
    let ux = DVector::from_vec(u.apply_transpose(x)?);
    let gv = DVector::from_column_slice(g);

    let d_of = |mu: f64| -> Result<Vec<f64>> {
        let sys = DMatrix::identity(p, p) * h + &gram * (0.5 * m * mu);
        let rhs = -(&gv + &ux * (0.5 * m * mu));
        let chol = sys
            .cholesky()
            .ok_or_else(|| Error::Subproblem("stationarity system is not positive definite".into()))?;
        Ok(chol.solve(&rhs).as_slice().to_vec())
    };
    let phi = |mu: f64| -> Result<(f64, Vec<f64>)> {
        let d = d_of(mu)?;
        let mut y = x.to_vec();
        u.apply_add(&d, &mut y);
        Ok((norm(&y) - mu, d))
    };

    let (phi0, d0) = phi(0.0)?;
    if phi0 <= 0.0 {
        return Ok(ProxSolution { d: d0, mu: 0.0 });
    }
    let (mut lo, mut hi) = (0.0, phi0.max(1.0));
    let mut grow = 0;
    while phi(hi)?.0 > 0.0 {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::Subproblem("could not bracket the norm equation".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid)?.0 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let (gap, d) = phi(mu)?;
    if gap.abs() > 1e-6 * mu.max(1.0) {
        return Err(Error::Subproblem(format!("norm equation residual {gap} at μ = {mu}")));
    }
    Ok(ProxSolution { d, mu })
}

/// Sketched prox at `x` for the instance, with `g = Uᵀ(Ax + b)` formed here.
pub fn sketched_cubic_prox(inst: &CubicQuadraticInstance, x: &[f64], u: &Sketch, h: f64) -> Result<Vec<f64>> {
    let g = super::sketched_smooth_gradient(inst, x, u)?;
    let sol = if u.has_orthonormal_columns() {
        cubic_prox_orthonormal(inst.m(), x, u, &g, h)?
    } else {
        cubic_prox_general(inst.m(), x, u, &g, h)?
    };
    Ok(sol.d)
}
