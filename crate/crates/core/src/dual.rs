//! Low-rank inference through the D×D dual kernel `C = B B^T`.
//!
//! `C` shares its nonzero spectrum with `L = B^T B`, so normalization,
//! marginal entries, and sampling run in time polynomial in `D` and at most
//! linear in `N`, never materializing the N×N kernel. Feature columns
//! `B_i = q_i φ_i` are produced on demand by a column provider so that the
//! structured module can reuse this machinery over exponentially large
//! ground sets.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{DppError, Result};
use crate::kernel::QualityDiversity;
use crate::linalg::{clamp_psd_spectrum, symmetric_eigen_sorted, LogValue};
use crate::subset::SubsetSelection;

/// Produces the column `B_i = q_i φ_i` for any item index.
pub type ColumnProvider = Arc<dyn Fn(usize) -> DVector<f64> + Send + Sync>;

/// The dual kernel `C = Σ_i B_i B_i^T` with on-demand column access.
#[derive(Clone)]
pub struct DualRepresentation {
    c: DMatrix<f64>,
    n_items: usize,
    columns: ColumnProvider,
}

impl std::fmt::Debug for DualRepresentation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DualRepresentation")
            .field("dim", &self.c.nrows())
            .field("n_items", &self.n_items)
            .finish()
    }
}

impl DualRepresentation {
    /// Builds `C = B B^T` from an explicit quality/diversity decomposition.
    pub fn build(qd: &QualityDiversity) -> Self {
        let b = qd.b_matrix();
        let c = &b * b.transpose();
        let n = qd.n_items();
        let cols: Vec<DVector<f64>> = (0..n).map(|i| b.column(i).clone_owned()).collect();
        DualRepresentation {
            c,
            n_items: n,
            columns: Arc::new(move |i| cols[i].clone()),
        }
    }

    /// Wraps a precomputed `C` and a column provider. The provider must
    /// satisfy `C = Σ_i B_i B_i^T` for the declared number of items.
    pub fn from_provider(c: DMatrix<f64>, n_items: usize, columns: ColumnProvider) -> Self {
        DualRepresentation { c, n_items, columns }
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn column(&self, i: usize) -> DVector<f64> {
        (self.columns)(i)
    }

    pub fn eigen(&self) -> Result<DualEigenbasis> {
        DualEigenbasis::of(self)
    }
}

/// Eigenpairs `(λ_n, ĉv_n)` of `C`, eigenvalues nonincreasing, plus the
/// normalization values `ĉv_n^T C ĉv_n` used when seeding phase two.
#[derive(Debug, Clone)]
pub struct DualEigenbasis {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    c_norms: Vec<f64>,
}

impl DualEigenbasis {
    pub fn of(rep: &DualRepresentation) -> Result<Self> {
        Self::of_matrix(rep.matrix())
    }

    /// Eigendecomposition of any PSD dual kernel matrix. The structured
    /// module uses this directly since its ground set is implicit.
    pub fn of_matrix(c: &DMatrix<f64>) -> Result<Self> {
        let (mut vals, vecs) = symmetric_eigen_sorted(c);
        clamp_psd_spectrum(&mut vals)?;
        let c_norms = (0..vecs.ncols())
            .map(|n| {
                let v = vecs.column(n);
                (c * v).dot(&v)
            })
            .collect();
        Ok(DualEigenbasis { eigenvalues: vals, eigenvectors: vecs, c_norms })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn c_norms(&self) -> &[f64] {
        &self.c_norms
    }
}

/// `det(C + I_D)`, equal to the primal normalizer `det(L + I_N)` because the
/// nonzero spectra coincide.
pub fn dual_normalizer(eigen: &DualEigenbasis) -> LogValue {
    let log: f64 = eigen.eigenvalues().iter().map(|&l| (l + 1.0).ln()).sum();
    LogValue::from_log(log)
}

/// Marginal kernel entry `K_ij = Σ_n (B_i^T ĉv_n)(B_j^T ĉv_n)/(λ_n+1)`,
/// computed in O(D^2) once the columns are in hand.
pub fn dual_marginal_entry(
    rep: &DualRepresentation,
    eigen: &DualEigenbasis,
    i: usize,
    j: usize,
) -> f64 {
    let bi = rep.column(i);
    let bj = if i == j { bi.clone() } else { rep.column(j) };
    let proj_i = eigen.eigenvectors().transpose() * bi;
    let proj_j = if i == j {
        proj_i.clone()
    } else {
        eigen.eigenvectors().transpose() * bj
    };
    eigen
        .eigenvalues()
        .iter()
        .zip(proj_i.iter().zip(proj_j.iter()))
        .map(|(&l, (&pi, &pj))| pi * pj / (l + 1.0))
        .sum()
}

const PIVOT_TOL: f64 = 1e-12;
const GS_REORTH_TOL: f64 = 1e-8;

fn c_inner(c: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    (c * v).dot(u)
}

/// Modified Gram-Schmidt under the inner product `<u, v> = u^T C v`, with a
/// second pass when cancellation is detected. Vectors that collapse are
/// dropped.
pub(crate) fn c_orthonormalize(vs: Vec<DVector<f64>>, c: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(vs.len());
    for mut v in vs {
        let pre = c_inner(c, &v, &v).max(0.0).sqrt();
        if pre == 0.0 {
            continue;
        }
        for b in &out {
            let coeff = c_inner(c, b, &v);
            v.axpy(-coeff, b, 1.0);
        }
        let mut norm = c_inner(c, &v, &v).max(0.0).sqrt();
        if norm < GS_REORTH_TOL * pre {
            for b in &out {
                let coeff = c_inner(c, b, &v);
                v.axpy(-coeff, b, 1.0);
            }
            norm = c_inner(c, &v, &v).max(0.0).sqrt();
            if norm < GS_REORTH_TOL * pre {
                continue;
            }
        }
        out.push(v / norm);
    }
    out
}

/// Seeds phase two: the C-normalized eigenvectors indexed by `J`.
pub(crate) fn seed_vhat(eigen: &DualEigenbasis, j_set: &[usize]) -> Vec<DVector<f64>> {
    j_set
        .iter()
        .map(|&n| {
            let norm = eigen.c_norms()[n].max(0.0).sqrt();
            eigen.eigenvectors().column(n).clone_owned() / norm
        })
        .collect()
}

/// One elimination step of the dual sampler: removes the span direction that
/// `b_i` exposes. The pivot is the vector with maximal `|ĉv^T B_i|`; the rest
/// are cleared against it and re-orthonormalized under the C inner product.
/// The pivot floor is relative to `‖B_i‖ max ‖ĉv‖`, the scale at which a dot
/// product is pure cancellation noise; individual structure columns of an
/// SDPP can be legitimately minuscule in absolute terms.
pub(crate) fn eliminate_item(
    vhat: Vec<DVector<f64>>,
    b_i: &DVector<f64>,
    c: &DMatrix<f64>,
) -> Result<Vec<DVector<f64>>> {
    let dots: Vec<f64> = vhat.iter().map(|v| v.dot(b_i)).collect();
    let (pivot_idx, pivot_dot) = dots
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, &d)| (i, d))
        .expect("nonempty basis");
    let v_scale = vhat.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    if pivot_dot.abs() < PIVOT_TOL * b_i.norm() * v_scale {
        return Err(DppError::InternalDegeneracy(
            "no basis vector overlaps the selected item".into(),
        ));
    }
    let pivot = vhat[pivot_idx].clone();
    let mut reduced = Vec::with_capacity(vhat.len() - 1);
    for (idx, mut v) in vhat.into_iter().enumerate() {
        if idx == pivot_idx {
            continue;
        }
        v.axpy(-dots[idx] / pivot_dot, &pivot, 1.0);
        reduced.push(v);
    }
    Ok(c_orthonormalize(reduced, c))
}

/// Samples `Y ~ P_L` entirely in the dual representation. Distributionally
/// identical to the primal sampler; runtime O(N D k^2 + D^2 k^3).
pub fn dual_sample<R: Rng + ?Sized>(
    rep: &DualRepresentation,
    eigen: &DualEigenbasis,
    rng: &mut R,
) -> Result<SubsetSelection> {
    let mut j_set = Vec::new();
    for (n, &lambda) in eigen.eigenvalues().iter().enumerate() {
        if rng.random::<f64>() < lambda / (lambda + 1.0) {
            j_set.push(n);
        }
    }
    let mut vhat = seed_vhat(eigen, &j_set);
    let n = rep.n_items();
    let mut items = Vec::with_capacity(vhat.len());
    while !vhat.is_empty() {
        // Pr(i) = (1/|V̂|) Σ_v (ĉv^T B_i)^2, renormalized before the draw.
        let mut mass = vec![0.0f64; n];
        for (i, m) in mass.iter_mut().enumerate() {
            let b_i = rep.column(i);
            *m = vhat.iter().map(|v| v.dot(&b_i)).map(|d| d * d).sum();
        }
        let total: f64 = mass.iter().sum();
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = n - 1;
        for (i, m) in mass.iter().enumerate() {
            acc += m;
            if u < acc {
                chosen = i;
                break;
            }
        }
        items.push(chosen);
        let b_i = rep.column(chosen);
        vhat = eliminate_item(vhat, &b_i, rep.matrix())?;
    }
    SubsetSelection::new(items, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::normalizer;
    use crate::kernel::{l_to_k, LEnsemble};
    use crate::oracle::{empirical_distribution, enumerate_dpp, EnumerationBudget};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_qd(seed: u64, n: usize, d: usize) -> QualityDiversity {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let phi = crate::kernel::tests::random_unit_columns(&mut rng, d, n);
        let q = DVector::from_fn(n, |_, _| rng.random_range(0.2..1.8));
        QualityDiversity::new(q, phi).unwrap()
    }

    #[test]
    fn build_trivial_cases() {
        // Standard basis features with unit quality: C = I_D.
        let q = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let phi = DMatrix::identity(3, 3);
        let rep = DualRepresentation::build(&QualityDiversity::new(q, phi).unwrap());
        assert_relative_eq!(rep.matrix(), &DMatrix::identity(3, 3), epsilon = 1e-12);

        // D = 1 collapses to the scalar sum of squares.
        let q = DVector::from_vec(vec![2.0, 3.0]);
        let phi = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let rep = DualRepresentation::build(&QualityDiversity::new(q, phi).unwrap());
        assert_relative_eq!(rep.matrix()[(0, 0)], 13.0, epsilon = 1e-12);
    }

    #[test]
    fn c_is_column_sum_and_spectrum_matches_l() {
        let qd = random_qd(50, 6, 3);
        let rep = DualRepresentation::build(&qd);
        let mut sum = DMatrix::zeros(3, 3);
        for i in 0..6 {
            let b = rep.column(i);
            sum += &b * b.transpose();
        }
        assert_relative_eq!(&sum, rep.matrix(), max_relative = 1e-9);

        let l = LEnsemble::from_features(&qd);
        let l_spec = l.eigen();
        let eigen = rep.eigen().unwrap();
        for n in 0..3 {
            let lc = eigen.eigenvalues()[n];
            let ll = l_spec.eigenvalues()[n];
            assert_relative_eq!(lc, ll, max_relative = 1e-9, epsilon = 1e-12);
        }
        // Remaining primal eigenvalues vanish.
        for n in 3..6 {
            assert!(l_spec.eigenvalues()[n].abs() < 1e-10);
        }
    }

    #[test]
    fn dual_eigenvectors_map_to_primal() {
        // For λ_n > 0, (1/sqrt(λ_n)) B^T ĉv_n are orthonormal eigenvectors
        // of L (checked up to sign).
        let qd = random_qd(51, 12, 4);
        let rep = DualRepresentation::build(&qd);
        let eigen = rep.eigen().unwrap();
        let b = qd.b_matrix();
        let l = LEnsemble::from_features(&qd);
        let mut mapped = Vec::new();
        for n in 0..rep.dim() {
            let lambda = eigen.eigenvalues()[n];
            if lambda < 1e-10 {
                continue;
            }
            let v = (b.transpose() * eigen.eigenvectors().column(n)) / lambda.sqrt();
            // Eigenvector equation L v = λ v.
            let resid = (l.matrix() * &v - &v * lambda).norm();
            assert!(resid <= 1e-8 * lambda.max(1.0), "residual {resid}");
            mapped.push(v);
        }
        for a in 0..mapped.len() {
            for b_ in 0..mapped.len() {
                let dot = mapped[a].dot(&mapped[b_]);
                let expect = if a == b_ { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn dual_normalizer_matches_primal() {
        let zero_rep = DualRepresentation::from_provider(
            DMatrix::zeros(2, 2),
            4,
            Arc::new(|_| DVector::zeros(2)),
        );
        assert_relative_eq!(dual_normalizer(&zero_rep.eigen().unwrap()).linear, 1.0);

        let qd = random_qd(52, 10, 4);
        let rep = DualRepresentation::build(&qd);
        let l = LEnsemble::from_features(&qd);
        let dual = dual_normalizer(&rep.eigen().unwrap());
        let primal = normalizer(&l.eigen());
        assert_relative_eq!(dual.linear, primal.linear, max_relative = 1e-10);

        // Log form stays finite for enormous eigenvalues.
        let big = DualRepresentation::from_provider(
            DMatrix::from_element(1, 1, 1e12),
            1,
            Arc::new(|_| DVector::from_element(1, 1e6)),
        );
        let lv = dual_normalizer(&big.eigen().unwrap());
        assert!(lv.log.is_finite());
    }

    #[test]
    fn dual_marginal_matches_primal_kernel() {
        let qd = random_qd(53, 8, 3);
        let rep = DualRepresentation::build(&qd);
        let eigen = rep.eigen().unwrap();
        let l = LEnsemble::from_features(&qd);
        let k = l_to_k(&l.eigen());
        for i in 0..8 {
            for j in 0..8 {
                let got = dual_marginal_entry(&rep, &eigen, i, j);
                assert_relative_eq!(got, k.matrix()[(i, j)], epsilon = 1e-9);
            }
        }
        // PSD 2x2 minor: K_ii K_jj - K_ij^2 >= 0 up to noise.
        for i in 0..8 {
            for j in 0..8 {
                if i == j {
                    continue;
                }
                let kii = dual_marginal_entry(&rep, &eigen, i, i);
                let kjj = dual_marginal_entry(&rep, &eigen, j, j);
                let kij = dual_marginal_entry(&rep, &eigen, i, j);
                assert!(kii * kjj - kij * kij >= -1e-12);
            }
        }
    }

    #[test]
    fn zero_spectrum_marginal_is_zero() {
        let rep = DualRepresentation::from_provider(
            DMatrix::zeros(2, 2),
            3,
            Arc::new(|_| DVector::zeros(2)),
        );
        let eigen = rep.eigen().unwrap();
        assert_eq!(dual_marginal_entry(&rep, &eigen, 1, 1), 0.0);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert!(dual_sample(&rep, &eigen, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn c_gram_schmidt_invariant() {
        let qd = random_qd(54, 9, 4);
        let rep = DualRepresentation::build(&qd);
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        let raw: Vec<DVector<f64>> =
            (0..3).map(|_| DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0))).collect();
        let basis = c_orthonormalize(raw, rep.matrix());
        assert_eq!(basis.len(), 3);
        for a in 0..basis.len() {
            for b in 0..basis.len() {
                let inner = c_inner(rep.matrix(), &basis[a], &basis[b]);
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((inner - expect).abs() <= 1e-8, "inner {inner} at ({a},{b})");
            }
        }
    }

    #[test]
    fn dual_sampling_law_matches_enumeration() {
        let qd = random_qd(56, 6, 3);
        let rep = DualRepresentation::build(&qd);
        let eigen = rep.eigen().unwrap();
        let l = LEnsemble::from_features(&qd);
        let table = enumerate_dpp(&l, &EnumerationBudget::default()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(57);
        let draws = 200_000u64;
        let mut counts = vec![0u64; 1 << 6];
        for _ in 0..draws {
            let y = dual_sample(&rep, &eigen, &mut rng).unwrap();
            counts[y.mask() as usize] += 1;
        }
        let report = empirical_distribution(&counts, &table.probabilities());
        assert!(report.tv < 0.01, "TV = {}", report.tv);

        // Singleton frequencies sit within 3 sigma of the dual marginals.
        let mut singles = [0u64; 6];
        for (mask, &c) in counts.iter().enumerate() {
            for (i, s) in singles.iter_mut().enumerate() {
                if mask >> i & 1 == 1 {
                    *s += c;
                }
            }
        }
        for (i, &s) in singles.iter().enumerate() {
            let p = dual_marginal_entry(&rep, &eigen, i, i);
            let freq = s as f64 / draws as f64;
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((freq - p).abs() <= 3.0 * sigma, "item {i}: {freq} vs {p}");
        }
    }
}
