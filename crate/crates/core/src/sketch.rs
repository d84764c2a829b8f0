//! Random sketch matrices `U ∈ ℝ^{n×p}` and alignment measurements.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::vector::{check_dim, norm, norm_sq};
use crate::problems::SparseMatrix;
use crate::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SketchKind {
    /// `p` distinct coordinates chosen uniformly.
    CoordinateBlock,
    /// Orthonormal basis of a uniformly random `p`-dimensional subspace.
    RandomOrthonormal,
    /// I.i.d. `N(0, 1/p)` entries.
    GaussianJlt,
    /// Exactly `s` nonzeros of value `±1/√s` in every row.
    SHashing(usize),
}

impl SketchKind {
    /// Whether sampled sketches have orthonormal columns.
    pub fn is_orthonormal(self) -> bool {
        matches!(self, SketchKind::CoordinateBlock | SketchKind::RandomOrthonormal)
    }
}

impl fmt::Display for SketchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SketchKind::CoordinateBlock => f.write_str("block"),
            SketchKind::RandomOrthonormal => f.write_str("orthonormal"),
            SketchKind::GaussianJlt => f.write_str("gaussian-jlt"),
            SketchKind::SHashing(s) => write!(f, "s-hashing:{s}"),
        }
    }
}

impl FromStr for SketchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block" => Ok(SketchKind::CoordinateBlock),
            "orthonormal" => Ok(SketchKind::RandomOrthonormal),
            "gaussian-jlt" => Ok(SketchKind::GaussianJlt),
            other => {
                let s = other
                    .strip_prefix("s-hashing:")
                    .and_then(|v| v.parse::<usize>().ok())
                    .filter(|&v| v >= 1)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown sketch kind {other:?}")))?;
                Ok(SketchKind::SHashing(s))
            }
        }
    }
}

impl TryFrom<String> for SketchKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SketchKind> for String {
    fn from(k: SketchKind) -> Self {
        k.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    /// Sorted coordinate indices.
    Block(Vec<usize>),
    /// Column-major `n × p` entries.
    Dense(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sketch {
    kind: SketchKind,
    n: usize,
    p: usize,
    repr: Repr,
}

impl Sketch {
    /// Coordinate block from an explicit index set.
    pub fn block(n: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        let p = indices.len();
        if p == 0 || p > n {
            return Err(Error::InvalidParameter(format!("block size {p} not in 1..={n}")));
        }
        if indices.windows(2).any(|w| w[0] == w[1]) || indices[p - 1] >= n {
            return Err(Error::InvalidParameter("block indices must be distinct and < n".into()));
        }
        Ok(Self { kind: SketchKind::CoordinateBlock, n, p, repr: Repr::Block(indices) })
    }

    /// Dense sketch from an `n × p` matrix.
    pub fn dense(kind: SketchKind, u: &DMatrix<f64>) -> Result<Self> {
        if kind == SketchKind::CoordinateBlock {
            return Err(Error::InvalidParameter("coordinate blocks use Sketch::block".into()));
        }
        let (n, p) = u.shape();
        if p == 0 || p > n {
            return Err(Error::InvalidParameter(format!("sketch shape {n}x{p} needs 1 <= p <= n")));
        }
        Ok(Self { kind, n, p, repr: Repr::Dense(u.as_slice().to_vec()) })
    }

    pub fn kind(&self) -> SketchKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn has_orthonormal_columns(&self) -> bool {
        self.kind.is_orthonormal()
    }

    /// The index set `S` of a coordinate block.
    pub fn block_indices(&self) -> Option<&[usize]> {
        match &self.repr {
            Repr::Block(s) => Some(s),
            Repr::Dense(_) => None,
        }
    }

    /// Column `j` of a dense sketch.
    pub fn column(&self, j: usize) -> Option<&[f64]> {
        match &self.repr {
            Repr::Dense(u) => Some(&u[j * self.n..(j + 1) * self.n]),
            Repr::Block(_) => None,
        }
    }

    pub fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, v.len())?;
        Ok(match &self.repr {
            Repr::Block(s) => s.iter().map(|&i| v[i]).collect(),
            Repr::Dense(u) => u
                .chunks_exact(self.n)
                .map(|col| col.iter().zip(v).map(|(a, b)| a * b).sum())
                .collect(),
        })
    }

    pub fn apply(&self, d: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.p, d.len())?;
        let mut out = vec![0.0; self.n];
        self.apply_add(d, &mut out);
        Ok(out)
    }

    /// `y += U d`.
    pub fn apply_add(&self, d: &[f64], y: &mut [f64]) {
        debug_assert_eq!(d.len(), self.p);
        debug_assert_eq!(y.len(), self.n);
        match &self.repr {
            Repr::Block(s) => {
                for (&i, &di) in s.iter().zip(d) {
                    y[i] += di;
                }
            }
            Repr::Dense(u) => {
                for (col, &dj) in u.chunks_exact(self.n).zip(d) {
                    for (yi, ui) in y.iter_mut().zip(col) {
                        *yi += ui * dj;
                    }
                }
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.repr {
            Repr::Block(s) => {
                let mut u = DMatrix::zeros(self.n, self.p);
                for (j, &i) in s.iter().enumerate() {
                    u[(i, j)] = 1.0;
                }
                u
            }
            Repr::Dense(u) => DMatrix::from_column_slice(self.n, self.p, u),
        }
    }

    /// `UᵀU` as a dense `p × p` matrix.
    pub fn gram(&self) -> DMatrix<f64> {
        match &self.repr {
            Repr::Block(_) => DMatrix::identity(self.p, self.p),
            Repr::Dense(_) => {
                let u = self.to_dense();
                u.transpose() * u
            }
        }
    }

    /// `UᵀAU` as a dense `p × p` matrix.
    pub fn sandwich(&self, a: &SparseMatrix) -> Result<DMatrix<f64>> {
        check_dim(self.n, a.n_rows())?;
        check_dim(self.n, a.n_cols())?;
        match &self.repr {
            Repr::Block(s) => Ok(a.principal_submatrix(s)),
            Repr::Dense(u) => {
                let mut out = DMatrix::zeros(self.p, self.p);
                let mut au = vec![0.0; self.n];
                for j in 0..self.p {
                    a.matvec_into(&u[j * self.n..(j + 1) * self.n], &mut au);
                    for (i, col) in u.chunks_exact(self.n).enumerate() {
                        out[(i, j)] = col.iter().zip(&au).map(|(x, y)| x * y).sum();
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Draws a sketch from a fresh generator seeded with `seed`.
pub fn sample(kind: SketchKind, n: usize, p: usize, seed: u64) -> Result<Sketch> {
    sample_with(kind, n, p, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_with<R: Rng + ?Sized>(kind: SketchKind, n: usize, p: usize, rng: &mut R) -> Result<Sketch> {
    if p == 0 || p > n {
        return Err(Error::InvalidParameter(format!("sketch size p = {p} not in 1..={n}")));
    }
    let repr = match kind {
        SketchKind::CoordinateBlock => {
            let mut s = index::sample(rng, n, p).into_vec();
            s.sort_unstable();
            Repr::Block(s)
        }
        SketchKind::RandomOrthonormal => {
            let g = DMatrix::<f64>::from_fn(n, p, |_, _| rng.sample(StandardNormal));
            let qr = g.qr();
            let r = qr.r();
            let mut q = qr.q();
            for j in 0..p {
                if r[(j, j)] < 0.0 {
                    q.column_mut(j).neg_mut();
                }
            }
            Repr::Dense(q.as_slice().to_vec())
        }
        SketchKind::GaussianJlt => {
            let scale = (p as f64).sqrt().recip();
            Repr::Dense(
                (0..n * p)
                    .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            )
        }
        SketchKind::SHashing(s) => {
            if s == 0 || s > p {
                return Err(Error::InvalidParameter(format!("s-hashing needs 1 <= s <= p, got s = {s}, p = {p}")));
            }
            let v = (s as f64).sqrt().recip();
            let mut u = vec![0.0; n * p];
            for row in 0..n {
                for col in index::sample(rng, p, s) {
                    u[col * n + row] = if rng.random::<bool>() { v } else { -v };
                }
            }
            Repr::Dense(u)
        }
    };
    Ok(Sketch { kind, n, p, repr })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentParams {
    pub alpha: f64,
    pub delta: f64,
}

impl AlignmentParams {
    pub fn new(alpha: f64, delta: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("delta", delta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(Self { alpha, delta })
    }
}

/// Smallest `p` for which a random orthonormal sketch is well aligned with
/// probability `1 − δ`: `⌈αn + 8√(ln(3/δ)·n)⌉`, clamped to `[1, n]`.
pub fn min_dimension_orthonormal(alpha: f64, delta: f64, n: usize) -> usize {
    let nf = n as f64;
    let p = (alpha * nf + 8.0 * ((3.0 / delta).ln() * nf).sqrt()).ceil();
    (p as usize).clamp(1, n.max(1))
}

/// Gaussian JLT size `⌈(1 − α)^{-2} |ln δ|⌉` with unit constant.
pub fn jlt_dimension(alpha: f64, delta: f64) -> usize {
    (((1.0 - alpha).powi(-2) * delta.ln().abs()).ceil() as usize).max(1)
}

/// Default s-hashing sparsity `⌈min(p, |ln δ|)⌉`, at least 1.
pub fn s_hashing_default(p: usize, delta: f64) -> usize {
    ((p as f64).min(delta.ln().abs()).ceil() as usize).clamp(1, p.max(1))
}

/// `‖Uᵀ grad‖ ≥ α ‖grad‖`; a zero gradient counts as aligned.
pub fn is_well_aligned(u: &Sketch, grad: &[f64], alpha: f64) -> Result<bool> {
    let g2 = norm_sq(grad);
    if g2 == 0.0 {
        check_dim(u.n(), grad.len())?;
        return Ok(true);
    }
    Ok(norm(&u.apply_transpose(grad)?) >= alpha * g2.sqrt())
}

/// Fraction of `trials` fresh sketches that are well aligned with `grad`.
///
/// Trial `t` draws from stream `t` of `seed`, so the estimate does not depend
/// on how the trials are scheduled.
pub fn estimate_alignment_probability(
    kind: SketchKind,
    n: usize,
    p: usize,
    grad: &[f64],
    alpha: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    check_dim(n, grad.len())?;
    let hits = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let u = sample_with(kind, n, p, &mut stream_rng(seed, t))?;
            is_well_aligned(&u, grad, alpha).map(usize::from)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(hits as f64 / trials as f64)
}
