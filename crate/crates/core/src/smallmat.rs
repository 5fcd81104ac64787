//! Dense linear algebra for the small structured drift matrix
//! A = -lambda 1 w^T - diag(x): matrix exponential, the phi_1 function, and
//! partial-pivot linear solves. Dimensions stay tiny (N <= ~10), so everything
//! is backed by dense nalgebra routines.

use crate::error::{Error, Result};
use crate::kernel::KernelApprox;
use nalgebra::{DMatrix, DVector};

/// The linear drift system of the factor ODE: dZ = (A Z + b) dt with
/// A = -lambda 1 w^T - diag(x) and b = theta 1 + diag(x) v0.
#[derive(Debug, Clone)]
pub struct DriftMatrix {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl DriftMatrix {
    pub fn new(lambda: f64, theta: f64, kernel: &KernelApprox) -> Self {
        let n = kernel.dim();
        let w = kernel.weights();
        let x = kernel.nodes();
        let v0 = kernel.v0_split();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = -lambda * w[j] - if i == j { x[i] } else { 0.0 };
            }
        }
        let b = DVector::from_iterator(n, (0..n).map(|i| theta + x[i] * v0[i]));
        DriftMatrix { a, b }
    }
}

/// e^(A h) via scaling-and-squaring with a Pade approximant.
pub fn mat_exp(a: &DMatrix<f64>, h: f64) -> Result<DMatrix<f64>> {
    if h < 0.0 {
        return Err(Error::Domain(format!("mat_exp requires h >= 0, got {h}")));
    }
    let scaled = a * h;
    if scaled.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entries in A*h".into()));
    }
    Ok(scaled.exp())
}

/// h * phi_1(A h) where phi_1(M) = sum_{k>=0} M^k / (k+1)!, computed through
/// the exponential of the augmented block matrix [[A h, h Id], [0, 0]].
/// Unlike A^{-1}(e^{Ah} - Id), this is defined for singular A as well, and the
/// drift solution e^(Ah) z + h phi_1(Ah) b holds for every A.
pub fn phi1(a: &DMatrix<f64>, h: f64) -> Result<DMatrix<f64>> {
    if h < 0.0 {
        return Err(Error::Domain(format!("phi1 requires h >= 0, got {h}")));
    }
    let n = a.nrows();
    let mut aug = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            aug[(i, j)] = a[(i, j)] * h;
        }
        aug[(i, n + i)] = h;
    }
    if aug.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entries in A*h".into()));
    }
    let e = aug.exp();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = e[(i, n + j)];
        }
    }
    Ok(out)
}

/// Solve M x = rhs by partial-pivot LU.
pub fn solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::Singular("matrix singular to working precision".into()))
}
