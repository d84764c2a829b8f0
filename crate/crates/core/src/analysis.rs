//! High-probability convergence certificates and their numerical validation.
//!
//! All bounds are stated for runs in which at least a `(1 − β)(1 − δ)`
//! fraction of the first `K + 1` sketches is well aligned, an event whose
//! probability is at least `1 − exp(−(β²/2)(1 − δ)(K + 1))`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream_rng;

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// Constants entering the sublinear and convex rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    /// Smallest descent margin `η_U` over the run.
    pub eta_min: f64,
    pub h_f_max: f64,
    pub h_psi_max: f64,
}

impl BoundParams {
    pub fn new(alpha: f64, beta: f64, delta: f64, eta_min: f64, h_f_max: f64, h_psi_max: f64) -> Result<Self> {
        check_unit("alpha", alpha)?;
        check_unit("beta", beta)?;
        check_unit("delta", delta)?;
        let p = Self { alpha, beta, delta, eta_min, h_f_max, h_psi_max };
        if !(eta_min > 0.0) || h_f_max < 0.0 || h_psi_max < 0.0 || !(p.c() > 0.0 && p.c().is_finite()) {
            return Err(Error::InvalidParameter(format!("degenerate bound constants {p:?}")));
        }
        Ok(p)
    }

    /// `C = α η_min / (4(H_f,max² + H_ψ,max²))`.
    pub fn c(&self) -> f64 {
        self.alpha * self.eta_min / (4.0 * (self.h_f_max.powi(2) + self.h_psi_max.powi(2)))
    }

    /// `(1 − β)(1 − δ)`.
    pub fn aligned_fraction(&self) -> f64 {
        (1.0 - self.beta) * (1.0 - self.delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentBound {
    /// `(1 − β)(1 − δ)(K + 1)`.
    pub threshold: f64,
    /// `1 − exp(−(β²/2)(1 − δ)(K + 1))`.
    pub prob_floor: f64,
}

pub fn alignment_count_bound(beta: f64, delta: f64, k: usize) -> AlignmentBound {
    let k1 = (k + 1) as f64;
    AlignmentBound {
        threshold: (1.0 - beta) * (1.0 - delta) * k1,
        prob_floor: -(-0.5 * beta * beta * (1.0 - delta) * k1).exp_m1(),
    }
}

/// `min_{i ≤ K} ‖∇F(x_i)‖² ≤ (F(x₀) − F*) / (C (1 − β)(1 − δ)(K + 1))`.
pub fn gradient_rate_bound(params: &BoundParams, f0_minus_fstar: f64, k: usize) -> f64 {
    f0_minus_fstar / (params.c() * params.aligned_fraction() * (k + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationThreshold {
    /// `(F(x₀) − F*)/(ε² C (1 − δ)(1 − β)) − 1`.
    pub accuracy_branch: f64,
    /// `(2/(β²(1 − δ))) ln(1/γ) − 1`.
    pub confidence_branch: f64,
    /// Ceiling of the larger branch, at least zero.
    pub iterations: u64,
}

/// Iterations after which `min ‖∇F‖ ≤ ε` holds with probability `1 − γ`.
pub fn iteration_threshold(epsilon: f64, gamma: f64, params: &BoundParams, f0_minus_fstar: f64) -> Result<IterationThreshold> {
    check_unit("epsilon", epsilon)?;
    check_unit("gamma", gamma)?;
    let accuracy_branch = f0_minus_fstar / (epsilon * epsilon * params.c() * params.aligned_fraction()) - 1.0;
    let confidence_branch = 2.0 / (params.beta * params.beta * (1.0 - params.delta)) * (1.0 / gamma).ln() - 1.0;
    let iterations = accuracy_branch.max(confidence_branch).max(0.0).ceil() as u64;
    Ok(IterationThreshold { accuracy_branch, confidence_branch, iterations })
}

fn check_k_above_threshold(beta: f64, delta: f64, k: usize) -> Result<()> {
    let threshold = 1.0 / ((1.0 - beta) * (1.0 - delta)) - 1.0;
    if (k as f64) > threshold {
        Ok(())
    } else {
        Err(Error::BelowThreshold { k, threshold })
    }
}

/// `F(x_K) − F(x*) ≤ (1/C) R² / ((1 − β)(1 − δ)(K + 1) − 1)` for convex `F`.
pub fn convex_rate_bound(params: &BoundParams, r_level: f64, k: usize) -> Result<f64> {
    check_k_above_threshold(params.beta, params.delta, k)?;
    if !(r_level > 0.0) {
        return Err(Error::InvalidParameter(format!("R must be positive, got {r_level}")));
    }
    Ok(r_level * r_level / (params.c() * (params.aligned_fraction() * (k + 1) as f64 - 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlMode {
    /// `F` satisfies the KL inequality with exponent `q`.
    Kl,
    /// `F` is uniformly convex of order `q`.
    UniformlyConvex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlParams {
    pub q: f64,
    pub sigma_q: f64,
    pub mode: KlMode,
    /// The constant `C` of [`BoundParams::c`].
    pub c: f64,
    pub beta: f64,
    pub delta: f64,
}

impl KlParams {
    pub fn new(q: f64, sigma_q: f64, mode: KlMode, c: f64, beta: f64, delta: f64) -> Result<Self> {
        check_unit("beta", beta)?;
        check_unit("delta", delta)?;
        if !(q > 1.0 && sigma_q > 0.0 && c > 0.0) {
            return Err(Error::InvalidParameter(format!("need q > 1, sigma > 0, C > 0; got q = {q}, sigma = {sigma_q}, C = {c}")));
        }
        Ok(Self { q, sigma_q, mode, c, beta, delta })
    }

    pub fn gamma1(&self) -> f64 {
        let (q, s) = (self.q, self.sigma_q);
        match self.mode {
            KlMode::Kl => self.c * s.powf(-2.0 / q),
            KlMode::UniformlyConvex => self.c * q.powf(2.0 / q) * s.powf(2.0 * (q - 1.0) / q),
        }
    }

    pub fn gamma2(&self) -> f64 {
        match self.mode {
            KlMode::Kl => 1.0 - self.c / self.sigma_q,
            KlMode::UniformlyConvex => 1.0 - 2.0 * self.sigma_q * self.c,
        }
    }

    /// `(2 − q)/q`.
    pub fn c1(&self) -> f64 {
        (2.0 - self.q) / self.q
    }

    /// `(1 − β)(1 − δ)`.
    pub fn c2(&self) -> f64 {
        (1.0 - self.beta) * (1.0 - self.delta)
    }
}

/// Function-value rate under the KL or uniform-convexity assumption.
///
/// * `q ∈ (1, 2)`: `gap / (1 + C₁(C₂(K + 1) − 1) γ₁ gap^{(2−q)/q})^{q/(2−q)}`
/// * `q = 2`: `γ₂^{C₂(K + 1) − 1} gap`
/// * `q > 2`: the contraction `1/(1 + γ₁ gap^{2/q − 1})` applied once to `gap`,
///   the bound on the gap after the next aligned step.
pub fn kl_rate_bound(params: &KlParams, gap: f64, k: usize) -> Result<f64> {
    check_k_above_threshold(params.beta, params.delta, k)?;
    let q = params.q;
    let aligned = params.c2() * (k + 1) as f64 - 1.0;
    if (q - 2.0).abs() <= 1e-12 {
        let g2 = params.gamma2();
        if !(g2 > 0.0 && g2 < 1.0) {
            return Err(Error::InvalidParameter(format!("gamma2 = {g2} outside (0, 1)")));
        }
        Ok(g2.powf(aligned) * gap)
    } else if q < 2.0 {
        let e = (2.0 - q) / q;
        Ok(gap / (1.0 + params.c1() * aligned * params.gamma1() * gap.powf(e)).powf(1.0 / e))
    } else {
        Ok(gap / (1.0 + params.gamma1() * gap.powf(2.0 / q - 1.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceSpec {
    pub zeta: f64,
    pub c: f64,
    pub delta0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecurrenceCase {
    /// `c = 1`, `ζ > 0`.
    Sublinear,
    /// `c ∈ (0, 1)`, `ζ = 0`.
    Linear,
    /// `c > 0`, `ζ ∈ (−1, 0)`.
    Superlinear,
}

impl RecurrenceSpec {
    pub fn case(&self) -> Result<RecurrenceCase> {
        let RecurrenceSpec { zeta, c, delta0 } = *self;
        if !(delta0 > 0.0) {
            return Err(Error::InvalidParameter(format!("delta0 must be positive, got {delta0}")));
        }
        if c == 1.0 && zeta > 0.0 {
            Ok(RecurrenceCase::Sublinear)
        } else if zeta == 0.0 && c > 0.0 && c < 1.0 {
            Ok(RecurrenceCase::Linear)
        } else if c > 0.0 && zeta > -1.0 && zeta < 0.0 {
            Ok(RecurrenceCase::Superlinear)
        } else {
            Err(Error::InvalidParameter(format!("no rate for zeta = {zeta}, c = {c}")))
        }
    }

    /// Next term of the equality recurrence `Δ_{k+1} = Δ_k − c Δ_k^{1+ζ}`.
    pub fn step(&self, delta: f64) -> f64 {
        delta - self.c * delta.powf(1.0 + self.zeta)
    }
}

/// Bound on `Δ_k` for the sublinear and linear cases.
///
/// The superlinear case has no closed form in `k`; use
/// [`superlinear_contraction`] instead.
pub fn recurrence_rate_bound(spec: &RecurrenceSpec, k: usize) -> Result<f64> {
    let kf = k as f64;
    match spec.case()? {
        RecurrenceCase::Sublinear => {
            let z = spec.zeta;
            Ok(spec.delta0 / (z * spec.delta0.powf(z) * kf + 1.0).powf(1.0 / z))
        }
        RecurrenceCase::Linear => Ok((1.0 - spec.c).powf(kf) * spec.delta0),
        RecurrenceCase::Superlinear => Err(Error::InvalidParameter(
            "superlinear case bounds one step at a time".into(),
        )),
    }
}

/// `(1/(ζk))^{1/ζ}`, the parameter-free form of the sublinear bound.
pub fn sublinear_tail_bound(zeta: f64, k: usize) -> f64 {
    (1.0 / (zeta * k as f64)).powf(1.0 / zeta)
}

/// Factor `1/(1 + c Δ_{k+1}^ζ)` with `Δ_{k+1} ≤ factor · Δ_k`.
pub fn superlinear_contraction(spec: &RecurrenceSpec, delta_next: f64) -> Result<f64> {
    match spec.case()? {
        RecurrenceCase::Superlinear => Ok(1.0 / (1.0 + spec.c * delta_next.powf(spec.zeta))),
        _ => Err(Error::InvalidParameter("contraction factor applies to the superlinear case".into())),
    }
}

/// `p y + ln(1 − p + p e^{−y}) − y² p / 2`, evaluated without cancellation.
pub fn scalar_inequality_gap(p: f64, y: f64) -> f64 {
    p * y + (p * (-y).exp_m1()).ln_1p() - 0.5 * y * y * p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub points: usize,
    /// Largest `LHS − RHS` over the grid.
    pub max_violation: f64,
    pub argmax: (f64, f64),
}

/// Scans `p ∈ [0, 1]`, `y ∈ [0, y_max]` on a uniform grid.
pub fn scalar_inequality_grid(grid_p: usize, grid_y: usize, y_max: f64) -> GridReport {
    assert!(grid_p >= 2 && grid_y >= 2, "grids need at least two points");
    let (max_violation, argmax) = (0..grid_p)
        .into_par_iter()
        .map(|i| {
            let p = i as f64 / (grid_p - 1) as f64;
            (0..grid_y)
                .map(|j| {
                    let y = y_max * j as f64 / (grid_y - 1) as f64;
                    (scalar_inequality_gap(p, y), (p, y))
                })
                .fold((f64::NEG_INFINITY, (0.0, 0.0)), |a, b| if b.0 > a.0 { b } else { a })
        })
        .reduce(|| (f64::NEG_INFINITY, (0.0, 0.0)), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    GridReport { points: grid_p * grid_y, max_violation, argmax }
}

/// True iff the inequality holds on the grid with `1e-12` slack.
pub fn verify_scalar_inequality(grid_p: usize, grid_y: usize, y_max: f64) -> bool {
    scalar_inequality_grid(grid_p, grid_y, y_max).max_violation <= 1e-12
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChernoffCheck {
    pub beta: f64,
    pub delta: f64,
    pub k: usize,
    pub threshold: f64,
    pub prob_floor: f64,
    pub trials: usize,
    /// Fraction of trials whose aligned count reached the threshold.
    pub empirical: f64,
    pub std_error: f64,
    /// `empirical ≥ prob_floor − 3 · std_error`.
    pub passed: bool,
}

/// Aligned counts `Σ_{i=0}^{K} T_i` with `T_i ~ Bernoulli(1 − δ)` for each
/// trial. Trial `t` uses stream `t` of `seed`.
pub fn simulate_aligned_counts(delta: f64, k: usize, trials: usize, seed: u64) -> Vec<u32> {
    (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t);
            (0..=k).map(|_| u32::from(rng.random::<f64>() >= delta)).sum()
        })
        .collect()
}

/// Compares the empirical tail of simulated aligned counts with the floor.
pub fn chernoff_check(beta: f64, delta: f64, k: usize, counts: &[u32]) -> ChernoffCheck {
    let AlignmentBound { threshold, prob_floor } = alignment_count_bound(beta, delta, k);
    let trials = counts.len();
    let hits = counts.iter().filter(|&&c| c as f64 >= threshold).count();
    let empirical = hits as f64 / trials as f64;
    let std_error = (empirical * (1.0 - empirical) / trials as f64).sqrt();
    ChernoffCheck {
        beta,
        delta,
        k,
        threshold,
        prob_floor,
        trials,
        empirical,
        std_error,
        passed: empirical >= prob_floor - 3.0 * std_error,
    }
}

pub fn chernoff_monte_carlo(beta: f64, delta: f64, k: usize, trials: usize, seed: u64) -> ChernoffCheck {
    chernoff_check(beta, delta, k, &simulate_aligned_counts(delta, k, trials, seed))
}

/// Largest violation `Δ_k − bound_k` (relative to the bound) along the
/// equality recurrence for `k ≤ k_max`. Iteration stops once a term or its
/// bound leaves the normal floating-point range, where relative comparisons
/// are meaningless.
///
/// Sublinear specs are also checked against [`sublinear_tail_bound`] for
/// `k ≥ 1`; superlinear specs against the one-step contraction.
pub fn recurrence_max_violation(spec: &RecurrenceSpec, k_max: usize) -> Result<f64> {
    let case = spec.case()?;
    let mut delta = spec.delta0;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..=k_max {
        match case {
            RecurrenceCase::Sublinear | RecurrenceCase::Linear => {
                let b = recurrence_rate_bound(spec, k)?;
                if b < f64::MIN_POSITIVE {
                    break;
                }
                worst = worst.max((delta - b) / b);
                if case == RecurrenceCase::Sublinear && k >= 1 {
                    let t = sublinear_tail_bound(spec.zeta, k);
                    worst = worst.max((b - t) / t);
                }
            }
            RecurrenceCase::Superlinear => {}
        }
        let next = spec.step(delta);
        if !(next >= f64::MIN_POSITIVE) || k == k_max {
            break;
        }
        if case == RecurrenceCase::Superlinear {
            let bound = superlinear_contraction(spec, next)? * delta;
            worst = worst.max((next - bound) / bound);
        }
        delta = next;
    }
    Ok(worst)
}

/// JSON certificate entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub bound_name: String,
    pub params: serde_json::Value,
    pub value: f64,
    pub validated: bool,
    pub evidence: serde_json::Value,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn alignment_bound_examples() {
        let b = alignment_count_bound(0.5, 0.5, 99);
        assert!(close(b.threshold, 25.0));
        assert!(close(b.prob_floor, 1.0 - (-6.25f64).exp()));
        let b = alignment_count_bound(0.3, 0.2, 0);
        assert!(close(b.threshold, 0.7 * 0.8));
        assert!(close(b.prob_floor, 1.0 - (-0.045f64 * 0.8).exp()));
    }

    #[test]
    fn gradient_rate_example() {
        let p = BoundParams::new(0.999_999, 0.5, 0.5, 4.0, 1.0, 0.0).unwrap();
        let q = BoundParams { alpha: 1.0, ..p };
        assert!(close(q.c(), 1.0));
        assert!(close(gradient_rate_bound(&q, 10.0, 7), 5.0));
        assert!(close(gradient_rate_bound(&q, 10.0, 15), 2.5));
        assert!(BoundParams::new(1.0, 0.5, 0.5, 4.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn convex_example() {
        let p = BoundParams { alpha: 1.0, beta: 0.5, delta: 0.5, eta_min: 4.0, h_f_max: 1.0, h_psi_max: 0.0 };
        assert!(close(convex_rate_bound(&p, 1.0, 7).unwrap(), 1.0));
        assert!(close(convex_rate_bound(&p, 2.0, 7).unwrap(), 4.0));
        assert!(matches!(convex_rate_bound(&p, 1.0, 3), Err(Error::BelowThreshold { .. })));
    }

    #[test]
    fn threshold_branches() {
        let p = BoundParams::new(0.5, 0.5, 0.1, 1.0, 1.0, 1.0).unwrap();
        let t = iteration_threshold(0.1, 0.05, &p, 3.0).unwrap();
        assert_eq!(t.iterations, t.accuracy_branch.max(t.confidence_branch).ceil() as u64);
        let half = iteration_threshold(0.05, 0.05, &p, 3.0).unwrap();
        assert!(close(half.accuracy_branch + 1.0, 4.0 * (t.accuracy_branch + 1.0)));
        let sure = iteration_threshold(0.1, 1.0 - 1e-15, &p, 3.0).unwrap();
        assert!(sure.confidence_branch < -0.999);
    }

    #[test]
    fn kl_examples() {
        // γ₂ = 1 − 2σC = 0.9 with C₂ = 0.25.
        let p = KlParams::new(2.0, 0.5, KlMode::UniformlyConvex, 0.1, 0.5, 0.5).unwrap();
        assert!(close(p.gamma2(), 0.9));
        assert!(close(kl_rate_bound(&p, 1.0, 7).unwrap(), 0.9));
        let s = KlParams::new(1.5, 1.0, KlMode::Kl, 0.2, 0.3, 0.1).unwrap();
        let a = kl_rate_bound(&s, 2.0, 10).unwrap();
        let b = kl_rate_bound(&s, 2.0, 20).unwrap();
        assert!(b < a && a < 2.0);
    }

    #[test]
    fn recurrence_examples() {
        let lin = RecurrenceSpec { zeta: 0.0, c: 0.5, delta0: 1.0 };
        assert!(close(recurrence_rate_bound(&lin, 3).unwrap(), 0.125));
        let sub = RecurrenceSpec { zeta: 1.0, c: 1.0, delta0: 0.5 };
        assert!(close(recurrence_rate_bound(&sub, 1).unwrap(), 1.0 / 3.0));
        assert!(close(sub.step(0.5), 0.25));
        let bad = RecurrenceSpec { zeta: 0.5, c: 0.5, delta0: 1.0 };
        assert!(bad.case().is_err());
        let sup = RecurrenceSpec { zeta: -0.5, c: 0.1, delta0: 1.0 };
        assert!(recurrence_rate_bound(&sup, 1).is_err());
        assert!(recurrence_max_violation(&sup, 1000).unwrap() <= 1e-12);
    }

    #[test]
    fn scalar_inequality_examples() {
        assert_eq!(scalar_inequality_gap(0.0, 3.0), 0.0);
        assert_eq!(scalar_inequality_gap(0.7, 0.0), 0.0);
        assert!(close(scalar_inequality_gap(1.0, 1.0), -0.5));
        assert!(verify_scalar_inequality(50, 50, 20.0));
    }

    #[test]
    fn chernoff_small() {
        let c = chernoff_monte_carlo(0.5, 0.1, 100, 2000, 1);
        assert!(c.passed, "{c:?}");
        assert_eq!(c, chernoff_monte_carlo(0.5, 0.1, 100, 2000, 1));
    }

    #[test]
    fn fast_linear_recurrence_stops_before_underflow() {
        let spec = RecurrenceSpec { zeta: 0.0, c: 0.98, delta0: 50.0 };
        let v = recurrence_max_violation(&spec, 10_000).unwrap();
        assert!(v.is_finite() && v <= 1e-12, "{v}");
    }
}
