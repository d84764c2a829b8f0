//! Real roots of quartic polynomials.

use nalgebra::{Complex, Matrix4, Schur};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `c4 μ⁴ + c3 μ³ + c2 μ² + c1 μ + c0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuarticCoefficients {
    pub c4: f64,
    pub c3: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl QuarticCoefficients {
    pub fn new(c4: f64, c3: f64, c2: f64, c1: f64, c0: f64) -> Self {
        Self { c4, c3, c2, c1, c0 }
    }

    /// Coefficients of the norm equation of the orthonormal cubic subproblem.
    ///
    /// `w_sq = ‖H·Uᵀx − Uᵀ∇f(x)‖²` and `xc_sq = ‖x − UUᵀx‖²`. The polynomial
    /// factors as `(μ² − xc_sq)(H + Mμ/2)² − w_sq`.
    pub fn cubic_subproblem(h: f64, m: f64, w_sq: f64, xc_sq: f64) -> Self {
        Self {
            c4: 0.25 * m * m,
            c3: h * m,
            c2: h * h - 0.25 * m * m * xc_sq,
            c1: -h * m * xc_sq,
            c0: -w_sq - h * h * xc_sq,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.c4, self.c3, self.c2, self.c1, self.c0]
    }

    pub fn eval(&self, mu: f64) -> f64 {
        (((self.c4 * mu + self.c3) * mu + self.c2) * mu + self.c1) * mu + self.c0
    }

    pub fn derivative(&self, mu: f64) -> f64 {
        ((4.0 * self.c4 * mu + 3.0 * self.c3) * mu + 2.0 * self.c2) * mu + self.c1
    }

    fn second_derivative(&self, mu: f64) -> f64 {
        (12.0 * self.c4 * mu + 6.0 * self.c3) * mu + 2.0 * self.c2
    }

    /// Residual bound a returned root must meet.
    pub fn residual_tolerance(&self) -> f64 {
        1e-8 * self.c0.abs().max(1.0)
    }
}

/// All real roots, ascending, with repeated roots reported once.
///
/// Roots come from the eigenvalues of the companion matrix of the rescaled
/// monic polynomial and are then polished by Newton's method. A complex
/// pair lying close to the real axis is resolved by locating the nearby
/// extremum: two real roots straddle it exactly when the polynomial changes
/// sign there.
pub fn solve_quartic_real_roots(q: &QuarticCoefficients) -> Result<Vec<f64>> {
    if q.c4 == 0.0 || !q.as_array().iter().all(|c| c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "quartic needs finite coefficients and c4 != 0, got {:?}",
            q.as_array()
        )));
    }
    // μ = s·t with s chosen so that the monic polynomial in t has
    // coefficients of magnitude at most one.
    let a = [q.c3 / q.c4, q.c2 / q.c4, q.c1 / q.c4, q.c0 / q.c4];
    let s = a
        .iter()
        .enumerate()
        .map(|(k, ak)| ak.abs().powf(1.0 / (k + 1) as f64))
        .fold(0.0f64, f64::max);
    if s == 0.0 {
        return Ok(vec![0.0]);
    }
    let t = [a[0] / s, a[1] / (s * s), a[2] / s.powi(3), a[3] / s.powi(4)];
    let scaled = QuarticCoefficients::new(1.0, t[0], t[1], t[2], t[3]);

    #[rustfmt::skip]
    let companion = Matrix4::new(
        -t[0], -t[1], -t[2], -t[3],
        1.0,   0.0,   0.0,   0.0,
        0.0,   1.0,   0.0,   0.0,
        0.0,   0.0,   1.0,   0.0,
    );
    let eig = companion_eigenvalues(companion)
        .ok_or(Error::NoConvergence { iterations: SCHUR_MAX_ITER, estimate: f64::NAN })?;

    let mut roots = Vec::with_capacity(4);
    for z in eig.iter() {
        let scale = z.norm().max(1.0);
        if z.im == 0.0 || z.im.abs() <= 1e-12 * scale {
            roots.push(newton_polish(&scaled, z.re));
        } else if z.im > 0.0 && z.im <= 1e-4 * scale {
            let tol = q.residual_tolerance() / (q.c4.abs() * s.powi(4));
            roots.extend(split_near_real_pair(&scaled, z.re, z.im, tol));
        }
    }

    // Eigenvalues of a tight cluster can come back real when the true roots
    // are a complex pair, or the reverse. A candidate that does not polish
    // down to a root is settled by the extremum test instead.
    let mut roots: Vec<f64> = roots
        .into_iter()
        .map(|r| newton_polish(q, r * s))
        .flat_map(|r| {
            if is_root(q, r) {
                vec![r]
            } else {
                split_near_real_pair(q, r, 0.0, q.residual_tolerance())
            }
        })
        .collect();
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|b, a| (*b - *a).abs() <= 1e-7 * a.abs().max(b.abs()).max(1e-300));
    if roots.is_empty() {
        return Err(Error::NoRealRoot { coefficients: q.as_array() });
    }
    Ok(roots)
}

const SCHUR_MAX_ITER: usize = 1000;

/// Unshifted-structure companions such as that of `t⁴ + 1` can stall the
/// QR iteration, so a stalled attempt is retried on `C + σI`.
fn companion_eigenvalues(companion: Matrix4<f64>) -> Option<Vec<Complex<f64>>> {
    for sigma in [0.0, 0.371_1, -0.527_3] {
        let shifted = companion + Matrix4::identity() * sigma;
        if let Some(schur) = Schur::try_new(shifted, f64::EPSILON, SCHUR_MAX_ITER) {
            return Some(schur.complex_eigenvalues().iter().map(|z| z - sigma).collect());
        }
    }
    None
}

/// Residual within the contract tolerance or the rounding floor of evaluating `q` at `r`.
fn is_root(q: &QuarticCoefficients, r: f64) -> bool {
    let terms: f64 = q.as_array().iter().rev().enumerate().map(|(k, c)| (c * r.powi(k as i32)).abs()).sum();
    q.eval(r).abs() <= q.residual_tolerance().max(16.0 * f64::EPSILON * terms)
}

fn newton_polish(q: &QuarticCoefficients, mut x: f64) -> f64 {
    let mut best = (q.eval(x).abs(), x);
    for _ in 0..50 {
        let (f, df) = (q.eval(x), q.derivative(x));
        if f == 0.0 || df == 0.0 {
            break;
        }
        let next = x - f / df;
        if !next.is_finite() {
            break;
        }
        let r = q.eval(next).abs();
        if r < best.0 {
            best = (r, next);
        } else if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            break;
        }
        x = next;
    }
    best.1
}

/// Real roots hidden in a complex pair `re ± i·im` with small `im`.
/// An extremum whose value is within `tol` of zero is reported as a double root.
fn split_near_real_pair(q: &QuarticCoefficients, re: f64, im: f64, tol: f64) -> Vec<f64> {
    // Extremum of q near re: Newton on q'.
    let mut c = re;
    for _ in 0..30 {
        let d2 = q.second_derivative(c);
        if d2 == 0.0 {
            break;
        }
        let step = q.derivative(c) / d2;
        c -= step;
        if step.abs() <= f64::EPSILON * c.abs().max(1.0) {
            break;
        }
    }
    let (fc, d2) = (q.eval(c), q.second_derivative(c));
    if fc.abs() <= tol {
        return vec![c];
    }
    if fc * d2 > 0.0 {
        return Vec::new();
    }
    let mut width = (2.0 * (-2.0 * fc / d2).sqrt()).max(4.0 * im);
    let mut out = Vec::with_capacity(2);
    for dir in [-1.0, 1.0] {
        for _ in 0..20 {
            let far = c + dir * width;
            if q.eval(far) * fc < 0.0 {
                out.push(bisect(q, c, far));
                break;
            }
            width *= 2.0;
        }
    }
    out
}

fn bisect(q: &QuarticCoefficients, mut lo: f64, mut hi: f64) -> f64 {
    let flo = q.eval(lo).signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if q.eval(mid).signum() == flo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Closed-form real roots (Ferrari's method through the resolvent cubic).
///
/// Loses accuracy near repeated roots; kept for cross-checking.
pub fn solve_quartic_ferrari(q: &QuarticCoefficients) -> Vec<f64> {
    let (a, b, c, d) = (q.c3 / q.c4, q.c2 / q.c4, q.c1 / q.c4, q.c0 / q.c4);
    // Depressed quartic y⁴ + p y² + r1 y + r0 with x = y − a/4.
    let a2 = a * a;
    let p = b - 3.0 * a2 / 8.0;
    let r1 = c - a * b / 2.0 + a2 * a / 8.0;
    let r0 = d - a * c / 4.0 + a2 * b / 16.0 - 3.0 * a2 * a2 / 256.0;
    let shift = -a / 4.0;

    let mut ys = Vec::new();
    if r1.abs() <= 1e-14 * (1.0 + p.abs() + r0.abs().sqrt()) {
        for z in quadratic_real_roots(1.0, p, r0) {
            if z >= 0.0 {
                ys.push(z.sqrt());
                ys.push(-z.sqrt());
            }
        }
    } else {
        // 8m³ + 8p m² + (2p² − 8r0) m − r1² = 0 has a positive root.
        let m = cubic_real_roots(p, p * p / 4.0 - r0, -r1 * r1 / 8.0)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let s = (2.0 * m).sqrt();
        let k = r1 / (2.0 * s);
        ys.extend(quadratic_real_roots(1.0, -s, p / 2.0 + m + k));
        ys.extend(quadratic_real_roots(1.0, s, p / 2.0 + m - k));
    }
    let mut xs: Vec<f64> = ys.into_iter().map(|y| y + shift).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|b, a| (*b - *a).abs() <= 1e-9 * a.abs().max(1.0));
    xs
}

fn quadratic_real_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let t = -0.5 * (b + b.signum() * sq);
    if t == 0.0 {
        return vec![0.0];
    }
    vec![t / a, c / t]
}

/// Real roots of the monic cubic `t³ + a t² + b t + c`.
fn cubic_real_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let q = (a * a - 3.0 * b) / 9.0;
    let r = (2.0 * a * a * a - 9.0 * a * b + 27.0 * c) / 54.0;
    let shift = a / 3.0;
    if r * r < q * q * q {
        let theta = (r / (q * q * q).sqrt()).clamp(-1.0, 1.0).acos();
        let m = -2.0 * q.sqrt();
        let tau = std::f64::consts::TAU;
        vec![
            m * (theta / 3.0).cos() - shift,
            m * ((theta + tau) / 3.0).cos() - shift,
            m * ((theta - tau) / 3.0).cos() - shift,
        ]
    } else {
        let big_a = -r.signum() * (r.abs() + (r * r - q * q * q).sqrt()).cbrt();
        let big_b = if big_a == 0.0 { 0.0 } else { q / big_a };
        vec![big_a + big_b - shift]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_roots(r: [f64; 4]) -> QuarticCoefficients {
        let [a, b, c, d] = r;
        QuarticCoefficients::new(
            1.0,
            -(a + b + c + d),
            a * b + a * c + a * d + b * c + b * d + c * d,
            -(a * b * c + a * b * d + a * c * d + b * c * d),
            a * b * c * d,
        )
    }

    #[test]
    fn subproblem_example() {
        // M = 2, H = 1, x = 0, ‖Uᵀ∇f‖ = 2.
        let q = QuarticCoefficients::cubic_subproblem(1.0, 2.0, 4.0, 0.0);
        assert_eq!(q.as_array(), [1.0, 2.0, 1.0, 0.0, -4.0]);
        let roots = solve_quartic_real_roots(&q).unwrap();
        let pos: Vec<f64> = roots.into_iter().filter(|r| *r >= 0.0).collect();
        assert_eq!(pos.len(), 1);
        assert!((pos[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn factored_quartic() {
        let q = from_roots([1.0, 2.0, -3.0, -4.0]);
        let roots = solve_quartic_real_roots(&q).unwrap();
        assert_eq!(roots.len(), 4);
        for (r, e) in roots.iter().zip([-4.0, -3.0, 1.0, 2.0]) {
            assert!((r - e).abs() < 1e-12, "{roots:?}");
        }
        let f = solve_quartic_ferrari(&q);
        for (r, e) in f.iter().zip([-4.0, -3.0, 1.0, 2.0]) {
            assert!((r - e).abs() < 1e-9, "{f:?}");
        }
    }

    #[test]
    fn repeated_and_clustered_roots() {
        let q = from_roots([1.0, 1.0, -2.0, 5.0]);
        let roots = solve_quartic_real_roots(&q).unwrap();
        assert_eq!(roots.len(), 3, "{roots:?}");
        for r in &roots {
            assert!(q.eval(*r).abs() <= q.residual_tolerance());
        }
        let q = from_roots([1.0, 1.0 + 1e-6, -2.0, 5.0]);
        assert_eq!(solve_quartic_real_roots(&q).unwrap().len(), 4);
    }

    #[test]
    fn no_real_roots() {
        let q = QuarticCoefficients::new(1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(solve_quartic_real_roots(&q), Err(Error::NoRealRoot { .. })));
        assert!(solve_quartic_ferrari(&q).is_empty());
    }

    // A complex pair near −0.46 that Schur reports as two real eigenvalues
    // once the large root sets the scale.
    #[test]
    fn small_complex_pair_beside_large_root() {
        let q = QuarticCoefficients::new(-0.007436644469516862, 915.5723478068276, -416.9941878980617, -963.4575226350545, -279.8263555928644);
        let roots = solve_quartic_real_roots(&q).unwrap();
        assert_eq!(roots.len(), 2, "{roots:?}");
        assert!((roots[0] - 1.379151574611552).abs() < 1e-12);
        assert!((roots[1] / 123115.87094021619 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_leading_coefficient() {
        let q = QuarticCoefficients::new(0.0, 1.0, 0.0, 0.0, 1.0);
        assert!(solve_quartic_real_roots(&q).is_err());
    }
}
