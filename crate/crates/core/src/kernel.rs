//! DPP kernel construction, validation, and conversion.
//!
//! An L-ensemble assigns every subset `Y` the unnormalized weight
//! `det(L_Y)` for a PSD kernel `L`. The marginal kernel `K = L(L+I)^{-1}`
//! gives inclusion marginals `P(A ⊆ Y) = det(K_A)`. A kernel may also be
//! built from a quality/diversity decomposition `L_ij = q_i φ_i^T φ_j q_j`
//! with unit-norm feature columns `φ_i`.

use nalgebra::{DMatrix, DVector};

use crate::error::{DppError, Result};
use crate::linalg::{
    clamp_psd_spectrum, symmetric_eigen_sorted, symmetrize, PSD_CLAMP_TOL, SYMMETRY_TOL,
};

/// Feature columns whose norm is within this distance of 1 are silently
/// renormalized; anything farther is rejected.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// How the kernel was constructed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Explicit,
    Gram,
}

/// Quality scores and unit-norm diversity features: `q_i > 0`, `‖φ_i‖ = 1`.
/// `phi` is D×N with one column per item.
#[derive(Debug, Clone)]
pub struct QualityDiversity {
    q: DVector<f64>,
    phi: DMatrix<f64>,
}

impl QualityDiversity {
    pub fn new(q: DVector<f64>, phi: DMatrix<f64>) -> Result<Self> {
        if q.len() != phi.ncols() {
            return Err(DppError::InvalidInput(format!(
                "{} quality scores but {} feature columns",
                q.len(),
                phi.ncols()
            )));
        }
        for (i, &qi) in q.iter().enumerate() {
            if !(qi > 0.0) || !qi.is_finite() {
                return Err(DppError::InvalidInput(format!(
                    "quality score q[{i}] = {qi} is not a positive real"
                )));
            }
        }
        let mut phi = phi;
        for i in 0..phi.ncols() {
            let norm = phi.column(i).norm();
            if norm == 0.0 {
                return Err(DppError::InvalidInput(format!(
                    "feature column {i} has zero norm"
                )));
            }
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(DppError::InvalidInput(format!(
                    "feature column {i} has norm {norm}, expected 1"
                )));
            }
            let mut col = phi.column_mut(i);
            col /= norm;
        }
        Ok(QualityDiversity { q, phi })
    }

    pub fn n_items(&self) -> usize {
        self.q.len()
    }

    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn quality(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.phi
    }

    /// The D×N matrix `B` with columns `B_i = q_i φ_i`, so `L = B^T B`.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        let mut b = self.phi.clone();
        for i in 0..b.ncols() {
            let mut col = b.column_mut(i);
            col *= self.q[i];
        }
        b
    }
}

/// A PSD kernel defining an L-ensemble.
#[derive(Debug, Clone)]
pub struct LEnsemble {
    l: DMatrix<f64>,
    provenance: Provenance,
}

impl LEnsemble {
    /// Ingests an explicit kernel matrix. Asymmetry up to `1e-9` (relative)
    /// is averaged away; the spectrum must be PSD up to clamping.
    pub fn from_matrix(l: DMatrix<f64>) -> Result<Self> {
        let l = symmetrize(&l, SYMMETRY_TOL)?;
        let (mut vals, _) = symmetric_eigen_sorted(&l);
        clamp_psd_spectrum(&mut vals)?;
        Ok(LEnsemble { l, provenance: Provenance::Explicit })
    }

    /// Builds `L = B^T B` from the quality/diversity decomposition.
    pub fn from_features(qd: &QualityDiversity) -> Self {
        let b = qd.b_matrix();
        LEnsemble { l: b.transpose() * &b, provenance: Provenance::Gram }
    }

    pub fn n_items(&self) -> usize {
        self.l.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn eigen(&self) -> SpectralDecomposition {
        SpectralDecomposition::of_psd(&self.l)
            .expect("an LEnsemble kernel is PSD by construction")
    }
}

/// Builds an L-ensemble from quality scores and feature columns.
///
/// Columns within `1e-6` of unit norm are renormalized; zero-norm columns and
/// non-positive qualities are rejected.
pub fn gram_from_features(q: DVector<f64>, phi: DMatrix<f64>) -> Result<LEnsemble> {
    let qd = QualityDiversity::new(q, phi)?;
    Ok(LEnsemble::from_features(&qd))
}

/// The normalized similarity matrix `S_ij = L_ij / sqrt(L_ii L_jj)`.
pub fn similarity(l: &LEnsemble) -> Result<DMatrix<f64>> {
    let m = l.matrix();
    let n = l.n_items();
    for i in 0..n {
        if m[(i, i)] <= 0.0 {
            return Err(DppError::DegenerateItem { index: i });
        }
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / m[(i, i)].sqrt()).collect();
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = m[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
        }
        s[(i, i)] = 1.0;
    }
    Ok(s)
}

/// A marginal kernel: symmetric with spectrum in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct MarginalKernel {
    k: DMatrix<f64>,
}

impl MarginalKernel {
    pub fn from_matrix(k: DMatrix<f64>) -> Result<Self> {
        let mut k = symmetrize(&k, SYMMETRY_TOL)?;
        let (vals, _) = symmetric_eigen_sorted(&k);
        for &v in vals.iter() {
            if v < -1e-9 || v > 1.0 + 1e-9 {
                return Err(DppError::InvalidInput(format!(
                    "marginal kernel eigenvalue {v} outside [0, 1]"
                )));
            }
        }
        for i in 0..k.nrows() {
            k[(i, i)] = k[(i, i)].clamp(0.0, 1.0);
        }
        Ok(MarginalKernel { k })
    }

    pub fn n_items(&self) -> usize {
        self.k.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn eigen(&self) -> SpectralDecomposition {
        SpectralDecomposition::of_psd(&self.k)
            .expect("a MarginalKernel is PSD by construction")
    }
}

/// Eigendecomposition of a symmetric PSD matrix, eigenvalues nonincreasing
/// and clamped at zero from below.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn of_psd(a: &DMatrix<f64>) -> Result<Self> {
        let (mut vals, vecs) = symmetric_eigen_sorted(a);
        clamp_psd_spectrum(&mut vals)?;
        Ok(SpectralDecomposition { eigenvalues: vals, eigenvectors: vecs })
    }

    /// Assembles a decomposition from already-validated parts.
    pub fn from_parts(eigenvalues: DVector<f64>, eigenvectors: DMatrix<f64>) -> Self {
        SpectralDecomposition { eigenvalues, eigenvectors }
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.eigenvectors
            * DMatrix::from_diagonal(&self.eigenvalues)
            * self.eigenvectors.transpose()
    }
}

/// Rescales the spectrum of `L` into the marginal kernel
/// `K = Σ_n λ_n/(λ_n+1) v_n v_n^T`.
pub fn l_to_k(spec: &SpectralDecomposition) -> MarginalKernel {
    let scaled = spec.eigenvalues().map(|l| l / (l + 1.0));
    let k = spec.eigenvectors()
        * DMatrix::from_diagonal(&scaled)
        * spec.eigenvectors().transpose();
    // Spectrum is in [0, 1) by construction.
    MarginalKernel { k: (&k + k.transpose()) * 0.5 }
}

/// Inverts the rescaling: `L = K(I-K)^{-1}`, eigenvalue map λ ↦ λ/(1-λ).
/// Fails when an eigenvalue of `K` reaches 1, i.e. the empty set has
/// probability zero and the DPP is not an L-ensemble.
pub fn k_to_l(spec: &SpectralDecomposition) -> Result<LEnsemble> {
    let vals = spec.eigenvalues();
    if let Some(&v) = vals.iter().find(|&&v| v >= 1.0 - PSD_CLAMP_TOL) {
        return Err(DppError::NotAnLEnsemble { eigenvalue: v });
    }
    let scaled = vals.map(|v| v / (1.0 - v));
    let l = spec.eigenvectors()
        * DMatrix::from_diagonal(&scaled)
        * spec.eigenvectors().transpose();
    Ok(LEnsemble { l: (&l + l.transpose()) * 0.5, provenance: Provenance::Explicit })
}

/// Ternary factor values `det(S_Y)` for all eight subsets of a 3-item DPP
/// with unit-diagonal similarity. Output is in subset order
/// {}, {1}, {2}, {3}, {1,2}, {1,3}, {2,3}, {1,2,3}.
pub fn ternary_factor_dpp(s12: f64, s13: f64, s23: f64) -> Result<[f64; 8]> {
    for (name, v) in [("S12", s12), ("S13", s13), ("S23", s23)] {
        if !(-1.0..=1.0).contains(&v) {
            return Err(DppError::InvalidInput(format!("{name} = {v} outside [-1, 1]")));
        }
    }
    let s = DMatrix::from_row_slice(3, 3, &[1.0, s12, s13, s12, 1.0, s23, s13, s23, 1.0]);
    let (mut vals, _) = symmetric_eigen_sorted(&s);
    clamp_psd_spectrum(&mut vals)
        .map_err(|_| DppError::InvalidInput("similarity matrix is not PSD".into()))?;
    Ok([
        1.0,
        1.0,
        1.0,
        1.0,
        1.0 - s12 * s12,
        1.0 - s13 * s13,
        1.0 - s23 * s23,
        1.0 + 2.0 * s12 * s13 * s23 - s12 * s12 - s13 * s13 - s23 * s23,
    ])
}
