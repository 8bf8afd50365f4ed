//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, ComplexField, DMatrix, DVector, Dyn, RealField, SymmetricEigen};
use num_traits::{One, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: &'static str },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// `(A + A^H) / 2`.
pub fn hermitian_part<N: ComplexField>(m: &DMatrix<N>) -> DMatrix<N> {
    let half: N::RealField = nalgebra::convert(0.5);
    (m + m.adjoint()).scale(half)
}

/// Largest absolute entry.
pub fn max_abs<N: ComplexField>(m: &DMatrix<N>) -> N::RealField {
    m.iter().fold(N::RealField::zero(), |acc, v| {
        let a = v.clone().abs();
        if a > acc {
            a
        } else {
            acc
        }
    })
}

/// Hermitian within `tol` relative to the largest entry.
pub fn is_hermitian<N: ComplexField>(m: &DMatrix<N>, tol: N::RealField) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(N::RealField::one());
    let diff = m - m.adjoint();
    max_abs(&diff) <= tol * scale
}

/// Eigenvalues of the Hermitian part, ascending.
pub fn hermitian_eigenvalues<N: ComplexField>(m: &DMatrix<N>) -> Vec<N::RealField> {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut vals: Vec<N::RealField> = eig.eigenvalues.iter().cloned().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    vals
}

pub fn min_eigenvalue<N: ComplexField>(m: &DMatrix<N>) -> N::RealField {
    hermitian_eigenvalues(m)
        .first()
        .cloned()
        .unwrap_or_else(N::RealField::zero)
}

/// Hermitian PSD square root with negative eigenvalues clipped at zero.
pub fn psd_sqrt<N: ComplexField>(m: &DMatrix<N>) -> DMatrix<N> {
    psd_function(m, |l| l.sqrt())
}

/// `V f(max(Λ, 0)) V^H` for the Hermitian part of `m`.
pub fn psd_function<N: ComplexField>(
    m: &DMatrix<N>,
    f: impl Fn(N::RealField) -> N::RealField,
) -> DMatrix<N> {
    let n = m.nrows();
    if n == 0 {
        return m.clone();
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut scaled = eig.eigenvectors.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let l = lambda.clone().max(N::RealField::zero());
        let s = f(l);
        scaled.column_mut(j).scale_mut(s);
    }
    &scaled * eig.eigenvectors.adjoint()
}

/// Cholesky of the Hermitian part.
pub fn cholesky_hermitian<N: ComplexField>(
    m: &DMatrix<N>,
    context: &'static str,
) -> Result<Cholesky<N, Dyn>, LinalgError> {
    Cholesky::new(hermitian_part(m)).ok_or(LinalgError::NotPositiveDefinite { context })
}

/// Inverse of a Hermitian positive-definite matrix.
pub fn hpd_inverse<N: ComplexField>(m: &DMatrix<N>, context: &'static str) -> Result<DMatrix<N>, LinalgError> {
    let chol = cholesky_hermitian(m, context)?;
    Ok(hermitian_part(&chol.inverse()))
}

/// `ln det` of a Hermitian positive-definite matrix.
pub fn hpd_log_det<N: ComplexField>(m: &DMatrix<N>, context: &'static str) -> Result<N::RealField, LinalgError> {
    let chol = cholesky_hermitian(m, context)?;
    let l = chol.l_dirty();
    let two: N::RealField = nalgebra::convert(2.0);
    let mut acc = N::RealField::zero();
    for i in 0..l.nrows() {
        acc += l[(i, i)].clone().real().ln();
    }
    Ok(two * acc)
}

/// Ratio of the largest to smallest squared Cholesky pivot; a cheap
/// conditioning indicator.
pub fn cholesky_condition<N: ComplexField>(chol: &Cholesky<N, Dyn>) -> N::RealField {
    let l = chol.l_dirty();
    let mut lo: Option<N::RealField> = None;
    let mut hi = N::RealField::zero();
    for i in 0..l.nrows() {
        let d = l[(i, i)].clone().real();
        let d2 = d.clone() * d;
        hi = hi.max(d2.clone());
        lo = Some(match lo {
            Some(v) => v.min(d2),
            None => d2,
        });
    }
    match lo {
        Some(v) if v > N::RealField::zero() => hi / v,
        _ => N::RealField::max_value().unwrap_or_else(N::RealField::one),
    }
}

/// Block-diagonal matrix stored by its diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagonal<N: ComplexField> {
    blocks: Vec<DMatrix<N>>,
}

impl<N: ComplexField> BlockDiagonal<N> {
    pub fn new(blocks: Vec<DMatrix<N>>) -> Result<Self, LinalgError> {
        for (i, b) in blocks.iter().enumerate() {
            if !b.is_square() {
                return Err(LinalgError::Dimension(format!(
                    "block {i} is {}x{}, expected square",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        Ok(Self { blocks })
    }

    /// Requires every block to be `size × size`.
    pub fn uniform(blocks: Vec<DMatrix<N>>, size: usize) -> Result<Self, LinalgError> {
        if let Some((i, b)) = blocks.iter().enumerate().find(|(_, b)| b.nrows() != size || b.ncols() != size) {
            return Err(LinalgError::Dimension(format!(
                "block {i} is {}x{}, expected {size}x{size}",
                b.nrows(),
                b.ncols()
            )));
        }
        Self::new(blocks)
    }

    pub fn blocks(&self) -> &[DMatrix<N>] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.nrows()).sum()
    }

    pub fn trace(&self) -> N {
        self.blocks.iter().fold(N::zero(), |acc, b| acc + b.trace())
    }

    pub fn to_dense(&self) -> DMatrix<N> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut off = 0;
        for b in &self.blocks {
            let k = b.nrows();
            out.view_mut((off, off), (k, k)).copy_from(b);
            off += k;
        }
        out
    }

    pub fn mul_vec(&self, v: &DVector<N>) -> DVector<N> {
        let mut out = DVector::zeros(v.len());
        let mut off = 0;
        for b in &self.blocks {
            let k = b.nrows();
            let seg = b * v.rows(off, k);
            out.rows_mut(off, k).copy_from(&seg);
            off += k;
        }
        out
    }

    pub fn scale(&self, s: N::RealField) -> Self {
        Self {
            blocks: self.blocks.iter().map(|b| b.scale(s.clone())).collect(),
        }
    }
}
