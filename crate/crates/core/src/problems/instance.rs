use serde::{Deserialize, Serialize};

use super::sparse::{SparseMatrix, Triplets};
use super::vector::{axpy, check_dim, dot, norm, Vector};
use crate::error::{Error, Result};

/// `F(x) = ½xᵀAx + bᵀx + (M/6)‖x‖³` with symmetric sparse `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicQuadraticInstance {
    a: SparseMatrix,
    b: Vector,
    m: f64,
}

impl CubicQuadraticInstance {
    pub fn new(a: SparseMatrix, b: Vector, m: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidParameter(format!("M must be positive, got {m}")));
        }
        if !a.is_symmetric() {
            return Err(Error::InvalidMatrix("A must be symmetric".into()));
        }
        check_dim(a.n_rows(), b.len())?;
        Ok(Self { a, b, m })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    /// Cubic regularization weight `M`.
    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let r = norm(x);
        Ok(0.5 * self.a.quadratic_form(x) + dot(&self.b, x) + self.m / 6.0 * r * r * r)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.a.matvec(x)?;
        axpy(1.0, &self.b, &mut g);
        axpy(0.5 * self.m * norm(x), x, &mut g);
        Ok(g)
    }
}

pub fn eval_objective(inst: &CubicQuadraticInstance, x: &[f64]) -> Result<f64> {
    inst.objective(x)
}

pub fn eval_gradient(inst: &CubicQuadraticInstance, x: &[f64]) -> Result<Vec<f64>> {
    inst.gradient(x)
}

/// On-disk form of an instance together with how it was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    /// Rows of `B` for `A = BᵀB`; `None` for the indefinite `A = C + Cᵀ`.
    pub m: Option<usize>,
    #[serde(rename = "M")]
    pub reg: f64,
    #[serde(rename = "A")]
    pub a: Triplets,
    pub b: Vector,
    pub seed: Option<u64>,
}

impl InstanceFile {
    pub fn from_instance(inst: &CubicQuadraticInstance, m: Option<usize>, seed: Option<u64>) -> Self {
        Self {
            n: inst.dim(),
            m,
            reg: inst.m(),
            a: inst.a().to_triplets(),
            b: inst.b().clone(),
            seed,
        }
    }

    pub fn to_instance(&self) -> Result<CubicQuadraticInstance> {
        let a = SparseMatrix::from_triplets(self.n, self.n, &self.a.rows, &self.a.cols, &self.a.vals)?;
        CubicQuadraticInstance::new(a, self.b.clone(), self.reg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(a: SparseMatrix, b: Vec<f64>, m: f64) -> CubicQuadraticInstance {
        CubicQuadraticInstance::new(a, Vector::new(b).unwrap(), m).unwrap()
    }

    #[test]
    fn objective_examples() {
        let i = inst(SparseMatrix::zeros(2, 2), vec![0.0, 0.0], 6.0);
        assert_eq!(i.objective(&[1.0, 0.0]).unwrap(), 1.0);
        let i = inst(SparseMatrix::identity(2), vec![0.0, 0.0], 0.6);
        assert!((i.objective(&[1.0, 0.0]).unwrap() - 0.6).abs() < 1e-15);
        assert!(i.objective(&[1.0]).is_err());
    }

    #[test]
    fn gradient_examples() {
        let i = inst(SparseMatrix::identity(2), vec![1.5, -2.0], 1.0);
        assert_eq!(i.gradient(&[0.0, 0.0]).unwrap(), vec![1.5, -2.0]);
        let i = inst(SparseMatrix::zeros(2, 2), vec![0.0, 0.0], 2.0);
        assert_eq!(i.gradient(&[3.0, 4.0]).unwrap(), vec![15.0, 20.0]);
    }

    #[test]
    fn rejects_bad_parameters() {
        let b = Vector::zeros(2);
        assert!(CubicQuadraticInstance::new(SparseMatrix::identity(2), b.clone(), 0.0).is_err());
        let ns = SparseMatrix::from_triplets(2, 2, &[0], &[1], &[1.0]).unwrap();
        assert!(CubicQuadraticInstance::new(ns, b.clone(), 1.0).is_err());
        assert!(CubicQuadraticInstance::new(SparseMatrix::identity(3), b, 1.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let i = inst(SparseMatrix::from_diagonal(&[2.0, -1.0]), vec![0.5, 1.0], 0.1);
        let file = InstanceFile::from_instance(&i, None, Some(4));
        let text = serde_json::to_string(&file).unwrap();
        assert!(text.contains("\"M\":0.1") && text.contains("\"m\":null"));
        let back: InstanceFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_instance().unwrap(), i);
    }
}
