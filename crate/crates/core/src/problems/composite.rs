use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::vector::{axpy, dot, norm_sq};
use crate::error::{Error, Result};
use crate::sketch::Sketch;

/// Oracles for a composite objective `F = f + ψ`.
///
/// Implementations must be callable from several runs at once.
pub trait CompositeProblem: Sync {
    fn dim(&self) -> usize;

    fn smooth_value(&self, x: &[f64]) -> f64;

    fn smooth_gradient(&self, x: &[f64]) -> Vec<f64>;

    fn psi_value(&self, x: &[f64]) -> f64;

    fn psi_gradient(&self, x: &[f64]) -> Vec<f64>;

    /// `Uᵀ∇f(x)`. Override when the restriction is cheaper than a full gradient.
    fn sketched_smooth_gradient(&self, x: &[f64], u: &Sketch) -> Result<Vec<f64>> {
        u.apply_transpose(&self.smooth_gradient(x))
    }

    /// Minimizer over `d ∈ ℝ^p` of `⟨g, d⟩ + (h/2)‖d‖² + ψ(x + Ud)` with
    /// `g = Uᵀ∇f(x)`.
    fn subspace_prox(&self, x: &[f64], sketched_grad: &[f64], u: &Sketch, h: f64) -> Result<Vec<f64>>;

    /// Lipschitz constant `L_U` of `∇f` along `range(U)`.
    fn smooth_curvature(&self, u: &Sketch) -> Result<f64>;

    /// `‖Uᵀ∇²ψ(x)U‖`, the local curvature of `ψ` along `range(U)`.
    fn psi_curvature(&self, x: &[f64], u: &Sketch) -> Result<f64>;

    fn objective(&self, x: &[f64]) -> f64 {
        self.smooth_value(x) + self.psi_value(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.smooth_gradient(x);
        axpy(1.0, &self.psi_gradient(x), &mut g);
        g
    }
}

type ValueFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type ProxFn = Box<dyn Fn(&[f64], &[f64], &Sketch, f64) -> Result<Vec<f64>> + Send + Sync>;
type SmoothCurvatureFn = Box<dyn Fn(&Sketch) -> f64 + Send + Sync>;
type PsiCurvatureFn = Box<dyn Fn(&[f64], &Sketch) -> f64 + Send + Sync>;

/// A composite problem assembled from closures.
pub struct FnProblem {
    pub dim: usize,
    pub f: ValueFn,
    pub grad_f: GradFn,
    pub psi: ValueFn,
    pub grad_psi: GradFn,
    pub prox: ProxFn,
    pub smooth_curvature: Option<SmoothCurvatureFn>,
    pub psi_curvature: Option<PsiCurvatureFn>,
}

impl FnProblem {
    /// Smooth problem with `ψ = 0`; the prox is a plain gradient step.
    pub fn smooth(
        dim: usize,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad_f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            f: Box::new(f),
            grad_f: Box::new(grad_f),
            psi: Box::new(|_| 0.0),
            grad_psi: Box::new(move |x| vec![0.0; x.len()]),
            prox: Box::new(|_, g, _, h| Ok(g.iter().map(|v| -v / h).collect())),
            smooth_curvature: None,
            psi_curvature: Some(Box::new(|_, _| 0.0)),
        }
    }

    pub fn with_smooth_curvature(mut self, l: impl Fn(&Sketch) -> f64 + Send + Sync + 'static) -> Self {
        self.smooth_curvature = Some(Box::new(l));
        self
    }
}

impl CompositeProblem for FnProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn smooth_value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn smooth_gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.grad_f)(x)
    }

    fn psi_value(&self, x: &[f64]) -> f64 {
        (self.psi)(x)
    }

    fn psi_gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.grad_psi)(x)
    }

    fn subspace_prox(&self, x: &[f64], g: &[f64], u: &Sketch, h: f64) -> Result<Vec<f64>> {
        (self.prox)(x, g, u, h)
    }

    fn smooth_curvature(&self, u: &Sketch) -> Result<f64> {
        self.smooth_curvature.as_ref().map(|l| l(u)).ok_or(Error::CurvatureUnavailable)
    }

    fn psi_curvature(&self, x: &[f64], u: &Sketch) -> Result<f64> {
        self.psi_curvature.as_ref().map(|l| l(x, u)).ok_or(Error::CurvatureUnavailable)
    }
}

/// Sampled check of the subspace quadratic upper bound
/// `|f(x + Uh) − f(x) − ⟨Uᵀ∇f(x), h⟩| ≤ (L_U/2)‖h‖²`.
///
/// Each trial draws a standard normal `x` and `h`. Every entry of `probes`
/// is checked as an additional direction `h` at a random `x`. Returns
/// `false` as soon as one point violates the bound by more than `1e-10`
/// relative to the magnitudes involved.
pub fn check_lipschitz_along_subspace(
    f: impl Fn(&[f64]) -> f64,
    grad_f: impl Fn(&[f64]) -> Vec<f64>,
    u: &Sketch,
    l_u: f64,
    trials: usize,
    probes: &[Vec<f64>],
    seed: u64,
) -> bool {
    assert!(l_u >= 0.0, "L_U must be nonnegative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, p) = (u.n(), u.p());
    let random_h = (0..trials).map(|_| None);
    let fixed_h = probes.iter().map(Some);
    for probe in random_h.chain(fixed_h) {
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let h: Vec<f64> = match probe {
            Some(h) => h.clone(),
            None => (0..p).map(|_| rng.sample(StandardNormal)).collect(),
        };
        let mut y = x.clone();
        u.apply_add(&h, &mut y);
        let (fx, fy) = (f(&x), f(&y));
        let g = u.apply_transpose(&grad_f(&x)).expect("sketch matches gradient length");
        let lhs = (fy - fx - dot(&g, &h)).abs();
        let rhs = 0.5 * l_u * norm_sq(&h);
        let slack = 1e-10 * fx.abs().max(fy.abs()).max(1.0);
        if lhs > rhs + slack {
            return false;
        }
    }
    true
}
