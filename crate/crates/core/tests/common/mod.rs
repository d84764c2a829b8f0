// Independent reference routes for the integration tests. Nothing here calls
// into the routines it is used to check.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use scpg::problems::{CubicQuadraticInstance, SparseMatrix};
use scpg::sketch::Sketch;

/// Evaluates a polynomial given highest-degree coefficient first.
pub fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().fold(0.0, |acc, &a| acc * x + a)
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    let deg = c.len() - 1;
    c[..deg].iter().enumerate().map(|(i, &a)| a * (deg - i) as f64).collect()
}

fn bisect_root(c: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    let slo = poly_eval(c, lo) < 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if (poly_eval(c, mid) < 0.0) == slo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Real roots by derivative recursion: the critical points split the line
/// into monotone pieces, each holding at most one simple root found by
/// bisection. A critical point where `|p| ≤ touch_tol` counts as a double root.
pub fn bracketing_roots(c: &[f64], touch_tol: f64) -> Vec<f64> {
    let c: Vec<f64> = c.iter().map(|a| a / c[0]).collect();
    if c.len() == 2 {
        return vec![-c[1]];
    }
    let crit = bracketing_roots(&poly_derivative(&c), 0.0);
    // Cauchy bound on root magnitudes.
    let bound = 1.0 + c[1..].iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let mut knots = vec![-bound];
    knots.extend(crit.iter().copied().filter(|x| x.abs() < bound));
    knots.push(bound);
    let mut roots = Vec::new();
    let mut crossed = vec![false; knots.len() - 1];
    for (i, w) in knots.windows(2).enumerate() {
        let (fa, fb) = (poly_eval(&c, w[0]), poly_eval(&c, w[1]));
        if fa == 0.0 {
            roots.push(w[0]);
        } else if fa * fb < 0.0 {
            roots.push(bisect_root(&c, w[0], w[1]));
            crossed[i] = true;
        }
    }
    if touch_tol > 0.0 {
        // An interior knot is a touching double root only when neither
        // neighbouring piece crosses zero.
        for i in 1..knots.len() - 1 {
            let x = knots[i];
            if poly_eval(&c, x).abs() <= touch_tol && !crossed[i - 1] && !crossed[i] {
                roots.push(x);
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|b, a| (*b - *a).abs() <= 1e-7 * a.abs().max(b.abs()).max(1e-300));
    roots
}

pub fn dense(a: &SparseMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.n_rows(), a.n_cols());
    for i in 0..a.n_rows() {
        for j in 0..a.n_cols() {
            d[(i, j)] = a.get(i, j);
        }
    }
    d
}

/// `F(x)` through dense linear algebra.
pub fn dense_objective(a: &DMatrix<f64>, b: &[f64], m: f64, x: &[f64]) -> f64 {
    let x = DVector::from_column_slice(x);
    let b = DVector::from_column_slice(b);
    let r = x.norm();
    0.5 * x.dot(&(a * &x)) + b.dot(&x) + m / 6.0 * r * r * r
}

pub fn dense_gradient(a: &DMatrix<f64>, b: &[f64], m: f64, x: &[f64]) -> Vec<f64> {
    let xv = DVector::from_column_slice(x);
    let g = a * &xv + DVector::from_column_slice(b) + &xv * (0.5 * m * xv.norm());
    g.iter().copied().collect()
}

/// Largest eigenvalue magnitude from a full symmetric eigendecomposition.
pub fn dense_eigen_norm(a: &SparseMatrix) -> f64 {
    dense(a).symmetric_eigen().eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// The sketched subproblem written out densely, with `‖x + Ud‖²` expanded as
/// a quadratic in `d` so grid scans cost `O(p²)` per point.
pub struct DenseSubproblem {
    pub g: Vec<f64>,
    pub h: f64,
    pub m: f64,
    x_sq: f64,
    utx: Vec<f64>,
    gram: DMatrix<f64>,
}

impl DenseSubproblem {
    pub fn new(inst: &CubicQuadraticInstance, x: &[f64], u: &Sketch, h: f64) -> Self {
        let ud = u.to_dense();
        let a = dense(inst.a());
        let xv = DVector::from_column_slice(x);
        let grad = &a * &xv + DVector::from_column_slice(inst.b());
        let g = ud.transpose() * grad;
        let utx = ud.transpose() * &xv;
        Self {
            g: g.iter().copied().collect(),
            h,
            m: inst.m(),
            x_sq: xv.norm_squared(),
            utx: utx.iter().copied().collect(),
            gram: ud.transpose() * &ud,
        }
    }

    pub fn p(&self) -> usize {
        self.g.len()
    }

    pub fn value(&self, d: &[f64]) -> f64 {
        let p = d.len();
        let mut r_sq = self.x_sq;
        let mut lin = 0.0;
        let mut sq = 0.0;
        for i in 0..p {
            r_sq += 2.0 * self.utx[i] * d[i];
            lin += self.g[i] * d[i];
            sq += d[i] * d[i];
            for j in 0..p {
                r_sq += d[i] * self.gram[(i, j)] * d[j];
            }
        }
        let r = r_sq.max(0.0).sqrt();
        lin + 0.5 * self.h * sq + self.m / 6.0 * r * r * r
    }

    /// `‖g + Hd + (M/2)‖x + Ud‖ Uᵀ(x + Ud)‖`.
    pub fn stationarity_residual(&self, d: &[f64]) -> f64 {
        let p = d.len();
        let dv = DVector::from_column_slice(d);
        let ut_y = DVector::from_column_slice(&self.utx) + &self.gram * &dv;
        let r_sq = self.x_sq + 2.0 * DVector::from_column_slice(&self.utx).dot(&dv) + dv.dot(&(&self.gram * &dv));
        let r = r_sq.max(0.0).sqrt();
        let res = DVector::from_column_slice(&self.g) + &dv * self.h + ut_y * (0.5 * self.m * r);
        debug_assert_eq!(res.len(), p);
        res.norm()
    }

    /// Minimum of the subproblem over a `points^p` grid on `[−radius, radius]^p`.
    /// The last coordinate runs in the inner loop, where `‖x + Ud‖²` is a
    /// quadratic in that coordinate alone.
    pub fn grid_min(&self, points: usize, radius: f64) -> (f64, f64) {
        let p = self.p();
        let l = p - 1;
        let step = 2.0 * radius / (points - 1) as f64;
        let coord = |i: usize| -radius + step * i as f64;
        let mut best = f64::INFINITY;
        let mut d = vec![0.0; p];
        for outer in 0..points.pow(l as u32) {
            let mut rest = outer;
            for dj in d[..l].iter_mut() {
                *dj = coord(rest % points);
                rest /= points;
            }
            let (mut r0, mut r1, mut lin, mut sq) = (self.x_sq, 2.0 * self.utx[l], 0.0, 0.0);
            for i in 0..l {
                r0 += 2.0 * self.utx[i] * d[i];
                r1 += 2.0 * self.gram[(i, l)] * d[i];
                lin += self.g[i] * d[i];
                sq += d[i] * d[i];
                for j in 0..l {
                    r0 += d[i] * self.gram[(i, j)] * d[j];
                }
            }
            let r2 = self.gram[(l, l)];
            for k in 0..points {
                let t = coord(k);
                let r = (r0 + t * (r1 + t * r2)).max(0.0).sqrt();
                let v = lin + self.g[l] * t + 0.5 * self.h * (sq + t * t) + self.m / 6.0 * r * r * r;
                best = best.min(v);
            }
        }
        (best, step)
    }
}
