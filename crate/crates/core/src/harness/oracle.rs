use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::discretize::{Field, LinearOperator, OperatorSpec};
use crate::error::{LabError, Result};

/// Largest system the dense oracle accepts.
pub const MAX_ORACLE_CELLS: usize = 4096;

/// Exact semi-discrete propagator `exp(tA)` of a small grid, from the
/// eigendecomposition of the symmetric matrix `A`.
pub struct DenseOracle {
    eigen: SymmetricEigen<f64, nalgebra::Dyn>,
}

impl DenseOracle {
    pub fn new(op: &OperatorSpec) -> Result<Self> {
        let n = op.len();
        if n > MAX_ORACLE_CELLS {
            return Err(LabError::input(format!(
                "dense oracle limited to {MAX_ORACLE_CELLS} cells, got {n}"
            )));
        }
        let mut a = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            op.apply(&e, &mut col);
            e[j] = 0.0;
            for i in 0..n {
                a[(i, j)] = col[i];
            }
        }
        // symmetrize away round-off before the symmetric solver
        let a = (&a + a.transpose()) * 0.5;
        Ok(DenseOracle {
            eigen: SymmetricEigen::new(a),
        })
    }

    pub fn propagate(&self, u0: &Field, t: f64) -> Result<Field> {
        let q = &self.eigen.eigenvectors;
        let coeffs = q.transpose() * DVector::from_column_slice(&u0.values);
        let scaled = DVector::from_iterator(
            coeffs.len(),
            coeffs
                .iter()
                .zip(self.eigen.eigenvalues.iter())
                .map(|(c, mu)| c * (mu * t).exp()),
        );
        let u = q * scaled;
        Field::new(u0.grid, u.as_slice().to_vec(), u0.time + t)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.eigen.eigenvalues.as_slice()
    }
}
