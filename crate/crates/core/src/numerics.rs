//! Dense complex linear algebra shared by every other module.
//!
//! Matrices are `nalgebra` dense matrices of `Complex64`. The helpers here add
//! the Hermitian-specific pieces the optimizer relies on: a deterministic
//! eigendecomposition, a Cholesky solve, Kronecker products and a handful of
//! trace/inner-product shortcuts.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Relative tolerance used for the Hermitian and PSD checks.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Eigenpairs of a Hermitian matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn max_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn min_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn vector(&self, i: usize) -> CVector {
        self.vectors.column(i).into_owned()
    }

    /// Rebuilds `V diag(λ) V^H`.
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.vectors.nrows();
        let mut out = CMatrix::zeros(n, n);
        for (i, &lambda) in self.values.iter().enumerate() {
            let v = self.vectors.column(i);
            out += (&v * v.adjoint()) * Complex64::from(lambda);
        }
        out
    }
}

pub fn frobenius_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_asymmetry(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_hermitian(m: &CMatrix) -> bool {
    hermitian_asymmetry(m) <= HERMITIAN_TOL * (1.0 + frobenius_norm(m))
}

pub fn ensure_hermitian(m: &CMatrix) -> Result<()> {
    let asymmetry = hermitian_asymmetry(m);
    if asymmetry <= HERMITIAN_TOL * (1.0 + frobenius_norm(m)) {
        Ok(())
    } else {
        Err(Error::NonHermitianInput { asymmetry })
    }
}

/// `(M + M^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::from(0.5)
}

/// Kronecker product; entry `(i*B.rows + p, j*B.cols + q)` is `A[i,j] * B[p,q]`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(a.nrows() * br, a.ncols() * bc);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let aij = a[(i, j)];
            for p in 0..br {
                for q in 0..bc {
                    out[(i * br + p, j * bc + q)] = aij * b[(p, q)];
                }
            }
        }
    }
    out
}

/// Kronecker product of two column vectors.
pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    let mut out = CVector::zeros(a.len() * b.len());
    for (i, ai) in a.iter().enumerate() {
        for (p, bp) in b.iter().enumerate() {
            out[i * b.len() + p] = ai * bp;
        }
    }
    out
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues are sorted in descending order. Each eigenvector is rotated so
/// that its largest-magnitude entry (lowest index on ties) is real and
/// positive, which makes the output reproducible across runs.
pub fn hermitian_eig(m: &CMatrix) -> Result<HermitianEigen> {
    ensure_hermitian(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(HermitianEigen {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut values = Vec::with_capacity(n);
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let mut v = eig.eigenvectors.column(src).into_owned();
        let norm = v.norm();
        if norm > 0.0 {
            v /= Complex64::from(norm);
        }
        fix_phase(&mut v);
        vectors.set_column(dst, &v);
    }
    Ok(HermitianEigen { values, vectors })
}

/// Rotates `v` so its largest-magnitude entry is real positive.
fn fix_phase(v: &mut CVector) {
    let peak = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return;
    }
    // near-equal magnitudes count as ties so roundoff cannot flip the pick
    let idx = v
        .iter()
        .position(|z| z.norm() >= peak * (1.0 - 1e-9))
        .unwrap_or(0);
    let anchor = v[idx];
    let rot = anchor.conj() / anchor.norm();
    *v *= rot;
}

/// Solves `M x = b` for Hermitian positive definite `M`.
pub fn solve_hermitian_positive(m: &CMatrix, b: &CVector) -> Result<CVector> {
    ensure_hermitian(m)?;
    Ok(checked_cholesky(m)?.solve(b))
}

// nalgebra takes complex square roots of negative pivots, so the sign of
// each pivot is checked here.
fn checked_cholesky(m: &CMatrix) -> Result<Cholesky<Complex64, nalgebra::Dyn>> {
    let chol = Cholesky::new(hermitian_part(m)).ok_or(Error::NotPositiveDefinite)?;
    let ok = chol
        .l_dirty()
        .diagonal()
        .iter()
        .all(|d| d.re > 0.0 && d.im.abs() <= 1e-12 * d.re && d.re.is_finite());
    if ok {
        Ok(chol)
    } else {
        Err(Error::NotPositiveDefinite)
    }
}

/// Lower Cholesky factor of a Hermitian positive definite matrix.
pub fn cholesky_lower(m: &CMatrix) -> Result<CMatrix> {
    checked_cholesky(m).map(|c| c.unpack())
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// `Re Tr(A^H B)`, the real inner product on Hermitian matrices.
pub fn inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// `Re Tr(A B)` for Hermitian `A`, `B`.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    // Tr(AB) = sum_ij A_ij B_ji = sum_ij conj(A_ji) B_ji for Hermitian A
    inner(a, b)
}

/// `x^H M x`, real part.
pub fn quadratic_form(m: &CMatrix, x: &CVector) -> f64 {
    (x.adjoint() * m * x)[(0, 0)].re
}

pub fn outer(x: &CVector) -> CMatrix {
    x * x.adjoint()
}

pub fn diag(entries: &[Complex64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_column_slice(entries))
}

/// PSD check at tolerance `HERMITIAN_TOL * (1 + ‖M‖_F)`.
pub fn ensure_psd(m: &CMatrix) -> Result<()> {
    let eig = hermitian_eig(m)?;
    let min_eig = eig.min_value();
    if min_eig >= -HERMITIAN_TOL * (1.0 + frobenius_norm(m)) {
        Ok(())
    } else {
        Err(Error::NonPsdCovariance { min_eig })
    }
}

/// Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped).
pub fn project_psd(m: &CMatrix) -> Result<CMatrix> {
    let mut eig = hermitian_eig(m)?;
    for v in eig.values.iter_mut() {
        *v = v.max(0.0);
    }
    Ok(hermitian_part(&eig.reconstruct()))
}
