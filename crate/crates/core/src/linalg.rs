//! Dense linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};

use crate::error::{DppError, Result};

/// Maximum relative asymmetry accepted before ingestion fails.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Eigenvalues in `[-PSD_CLAMP_TOL * max(1, lambda_max), 0)` are clamped to zero.
pub const PSD_CLAMP_TOL: f64 = 1e-8;

/// A positive quantity carried in both log and linear form.
///
/// `det(L + I)` overflows for modest N with large eigenvalues, so all
/// normalizers and probabilities are computed in log space first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogValue {
    pub log: f64,
    pub linear: f64,
}

impl LogValue {
    pub fn from_log(log: f64) -> Self {
        LogValue { log, linear: log.exp() }
    }

    pub fn from_linear(linear: f64) -> Self {
        LogValue { log: linear.ln(), linear }
    }
}

/// Checks symmetry within `tol` (absolute, relative to the largest entry) and
/// returns the averaged matrix `(A + A^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(DppError::InvalidInput(format!(
            "matrix is {}x{}, expected square",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.amax().max(1.0);
    let mut max_asym = 0.0f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            max_asym = max_asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if max_asym > tol * scale {
        return Err(DppError::InvalidInput(format!(
            "matrix asymmetry {max_asym:.3e} exceeds tolerance"
        )));
    }
    Ok((a + a.transpose()) * 0.5)
}

/// Symmetric eigendecomposition with eigenpairs sorted by nonincreasing
/// eigenvalue. Returns `(eigenvalues, eigenvectors)` with eigenvectors as
/// columns.
pub fn symmetric_eigen_sorted(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Clamps small negative eigenvalues of a nominally PSD spectrum to zero.
/// Values below `-PSD_CLAMP_TOL * max(1, lambda_max)` mean the matrix is
/// genuinely indefinite and produce an error.
pub fn clamp_psd_spectrum(eigenvalues: &mut DVector<f64>) -> Result<()> {
    let lambda_max = eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let floor = -PSD_CLAMP_TOL * lambda_max.max(1.0);
    for v in eigenvalues.iter_mut() {
        if *v < floor {
            return Err(DppError::InvalidInput(format!(
                "matrix is not positive semidefinite: eigenvalue {v:.6e}"
            )));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Determinant of the principal minor of `a` indexed by `rows` (also used as
/// columns). An empty index set yields 1.
pub fn principal_minor_det(a: &DMatrix<f64>, rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 1.0;
    }
    a.select_rows(rows.iter()).select_columns(rows.iter()).determinant()
}

/// Log-determinant of a PSD principal minor via Cholesky; `None` when the
/// minor is singular (determinant zero to working precision).
pub fn principal_minor_log_det(a: &DMatrix<f64>, rows: &[usize]) -> Option<f64> {
    if rows.is_empty() {
        return Some(0.0);
    }
    let sub = a.select_rows(rows.iter()).select_columns(rows.iter());
    let scale = sub.diagonal().amax().max(f64::MIN_POSITIVE);
    let chol = sub.cholesky()?;
    let mut log_det = 0.0;
    for i in 0..rows.len() {
        let d = chol.l()[(i, i)];
        if d * d <= 1e-13 * scale {
            return None;
        }
        log_det += 2.0 * d.ln();
    }
    Some(log_det)
}

/// Extracts the submatrix of `a` with the given rows and columns.
pub fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    a.select_rows(rows.iter()).select_columns(cols.iter())
}
