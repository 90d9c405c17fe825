//! Fixed-cardinality DPPs: elementary symmetric polynomials, exact
//! normalization, eigenvector-subset sampling, marginals, and conditioning.
//!
//! The normalizer of a k-DPP is `e_k(λ)`, the k-th elementary symmetric
//! polynomial of the kernel spectrum, computed by the subtraction-free
//! summation recursion `e_l^n = e_l^{n-1} + λ_n e_{l-1}^{n-1}`.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{DppError, Result};
use crate::inference::{condition, sample_elementary, ConditionedDpp};
use crate::kernel::{LEnsemble, SpectralDecomposition};
use crate::linalg::{principal_minor_log_det, LogValue};
use crate::subset::{ConditionSpec, SubsetSelection};

/// Table of elementary symmetric polynomials `e[l][n]` for `l = 0..=k_max`,
/// `n = 0..=N`.
///
/// Eigenvalues are rescaled by `1/λ_max` before the recursion so the entries
/// stay in range for large spectra; the scale factor is reapplied in log
/// space. Acceptance ratios of the sampler are scale-invariant and use the
/// scaled entries directly.
#[derive(Debug, Clone)]
pub struct EspTable {
    /// `values[l][n]` holds `e_l(λ_1/s, ..., λ_n/s)`.
    values: Vec<Vec<f64>>,
    scale: f64,
    scaled_lambdas: Vec<f64>,
    k_max: usize,
}

impl EspTable {
    pub fn compute(lambdas: &DVector<f64>, k_max: usize) -> Result<Self> {
        let n = lambdas.len();
        if k_max > n {
            return Err(DppError::InvalidInput(format!(
                "k = {k_max} exceeds the number of eigenvalues {n}"
            )));
        }
        if lambdas.iter().any(|&l| l < 0.0) {
            return Err(DppError::InvalidInput("negative eigenvalue".into()));
        }
        let scale = lambdas.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
        let scaled: Vec<f64> = lambdas.iter().map(|&l| l / scale).collect();
        let mut values = vec![vec![0.0; n + 1]; k_max + 1];
        values[0] = vec![1.0; n + 1];
        for l in 1..=k_max {
            for m in 1..=n {
                values[l][m] = values[l][m - 1] + scaled[m - 1] * values[l - 1][m - 1];
            }
        }
        Ok(EspTable { values, scale, scaled_lambdas: scaled, k_max })
    }

    pub fn n(&self) -> usize {
        self.scaled_lambdas.len()
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// `e_l(λ_1..λ_n)` on the original (unscaled) eigenvalues.
    pub fn e(&self, l: usize, n: usize) -> f64 {
        self.log_e(l, n).exp()
    }

    /// Log of `e_l(λ_1..λ_n)`; `-inf` when the polynomial vanishes.
    pub fn log_e(&self, l: usize, n: usize) -> f64 {
        let v = self.values[l][n];
        if v <= 0.0 {
            f64::NEG_INFINITY
        } else {
            v.ln() + l as f64 * self.scale.ln()
        }
    }

    fn scaled(&self, l: usize, n: usize) -> f64 {
        self.values[l][n]
    }
}

/// `Z_k = e_k(λ) = Σ_{|Y|=k} det(L_Y)`, in log and linear form.
pub fn kdpp_normalizer(lambdas: &DVector<f64>, k: usize) -> Result<LogValue> {
    let table = EspTable::compute(lambdas, k)?;
    Ok(LogValue::from_log(table.log_e(k, lambdas.len())))
}

/// `P^k_L(Y) = det(L_Y) / Z_k`; errors unless `|Y| = k`.
pub fn kdpp_probability(l: &LEnsemble, y: &SubsetSelection, k: usize) -> Result<LogValue> {
    if y.len() != k {
        return Err(DppError::CardinalityMismatch { expected: k, got: y.len() });
    }
    let spec = l.eigen();
    let log_z = kdpp_normalizer(spec.eigenvalues(), k)?.log;
    if log_z == f64::NEG_INFINITY {
        return Err(DppError::InfeasibleCardinality { k });
    }
    match principal_minor_log_det(l.matrix(), y.items()) {
        Some(ld) => Ok(LogValue::from_log(ld - log_z)),
        None => Ok(LogValue { log: f64::NEG_INFINITY, linear: 0.0 }),
    }
}

/// Samples an index set `J` of exactly `k` eigenvalues with
/// `Pr(J) = Π_{n∈J} λ_n / e_k^N`, scanning `n = N..1` with acceptance ratio
/// `λ_n e_{l-1}^{n-1} / e_l^n`.
pub fn sample_k_eigenvectors<R: Rng + ?Sized>(
    lambdas: &DVector<f64>,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let table = EspTable::compute(lambdas, k)?;
    sample_k_eigenvectors_with_table(&table, k, rng)
}

fn sample_k_eigenvectors_with_table<R: Rng + ?Sized>(
    table: &EspTable,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = table.n();
    if table.scaled(k, n) <= 0.0 {
        return Err(DppError::InfeasibleCardinality { k });
    }
    let mut j_set = Vec::with_capacity(k);
    let mut l = k;
    for m in (1..=n).rev() {
        if l == 0 {
            break;
        }
        let accept = table.scaled_lambdas[m - 1] * table.scaled(l - 1, m - 1)
            / table.scaled(l, m);
        if rng.random::<f64>() < accept {
            j_set.push(m - 1);
            l -= 1;
        }
    }
    debug_assert_eq!(l, 0, "the recursion guarantees k acceptances");
    j_set.reverse();
    Ok(j_set)
}

/// Draws a size-k subset from the k-DPP: selects `k` eigenvectors and then
/// samples the corresponding elementary DPP.
pub fn kdpp_sample<R: Rng + ?Sized>(
    spec: &SpectralDecomposition,
    k: usize,
    rng: &mut R,
) -> Result<SubsetSelection> {
    if k == 0 {
        return Ok(SubsetSelection::empty());
    }
    let j_set = sample_k_eigenvectors(spec.eigenvalues(), k, rng)?;
    let v = spec.eigenvectors().select_columns(j_set.iter());
    let items = sample_elementary(&v, rng);
    SubsetSelection::new(items, spec.n())
}

/// A k-DPP conditioned on including `A`: a `(k - |A|)`-DPP over the
/// remaining items with the include-conditioned kernel.
#[derive(Debug, Clone)]
pub struct ConditionedKdpp {
    pub dpp: ConditionedDpp,
    pub k: usize,
}

/// Conditions the k-DPP on `A ⊆ Y`. Requires `det(L_A) > 0`.
pub fn kdpp_condition(l: &LEnsemble, a: &SubsetSelection, k: usize) -> Result<ConditionedKdpp> {
    if a.len() > k {
        return Err(DppError::CardinalityMismatch { expected: k, got: a.len() });
    }
    let spec = ConditionSpec::new(a.clone(), SubsetSelection::empty())?;
    let dpp = condition(l, &spec)?;
    Ok(ConditionedKdpp { dpp, k: k - a.len() })
}

/// `P^k(A ⊆ Y) = (Z^A_{k-|A|} / Z_k) det(L_A)`, with `Z^A` computed from
/// the spectrum of the include-conditioned kernel. Returns 0 when
/// `det(L_A) = 0`.
pub fn kdpp_marginal(l: &LEnsemble, a: &SubsetSelection, k: usize) -> Result<f64> {
    if a.len() > k {
        return Err(DppError::CardinalityMismatch { expected: k, got: a.len() });
    }
    if a.is_empty() {
        return Ok(1.0);
    }
    let log_det_a = match principal_minor_log_det(l.matrix(), a.items()) {
        Some(ld) => ld,
        None => return Ok(0.0),
    };
    let spec = l.eigen();
    let log_zk = kdpp_normalizer(spec.eigenvalues(), k)?.log;
    if log_zk == f64::NEG_INFINITY {
        return Err(DppError::InfeasibleCardinality { k });
    }
    let conditioned = kdpp_condition(l, a, k)?;
    let cond_spec = conditioned.dpp.model.eigen();
    let log_za = kdpp_normalizer(cond_spec.eigenvalues(), conditioned.k)?.log;
    if log_za == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    Ok((log_za + log_det_a - log_zk).exp().clamp(0.0, 1.0))
}

/// Complete-binary-tree cache of elementary symmetric polynomials over the
/// spectrum, supporting O(log N · k^2) leave-one-out queries.
///
/// The tree is padded to a power of two with neutral leaves whose polynomial
/// is `(1, 0, ..., 0)`, an exact identity for the merge recursion
/// `e_j(Λ_1 ∪ Λ_2) = Σ_l e_l(Λ_1) e_{j-l}(Λ_2)`.
#[derive(Debug, Clone)]
pub struct EspLeaveOneOutTree {
    /// Heap-ordered nodes, each a truncated polynomial `e_0..=e_cap` over
    /// the rescaled eigenvalues.
    nodes: Vec<Vec<f64>>,
    leaves: usize,
    n: usize,
    cap: usize,
    scale: f64,
}

fn merge_poly(a: &[f64], b: &[f64], cap: usize) -> Vec<f64> {
    let mut out = vec![0.0; cap + 1];
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for l in 0..=j {
            acc += a[l] * b[j - l];
        }
        *o = acc;
    }
    out
}

impl EspLeaveOneOutTree {
    pub fn build(lambdas: &DVector<f64>, k: usize) -> Result<Self> {
        let n = lambdas.len();
        if n == 0 {
            return Err(DppError::InvalidInput("empty spectrum".into()));
        }
        if lambdas.iter().any(|&l| l < 0.0) {
            return Err(DppError::InvalidInput("negative eigenvalue".into()));
        }
        let scale = lambdas.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
        let leaves = n.next_power_of_two();
        let cap = k;
        let mut nodes = vec![Vec::new(); 2 * leaves];
        for i in 0..leaves {
            let mut poly = vec![0.0; cap + 1];
            poly[0] = 1.0;
            if i < n && cap >= 1 {
                poly[1] = lambdas[i] / scale;
            }
            nodes[leaves + i] = poly;
        }
        for i in (1..leaves).rev() {
            nodes[i] = merge_poly(&nodes[2 * i], &nodes[2 * i + 1], cap);
        }
        Ok(EspLeaveOneOutTree { nodes, leaves, n, cap, scale })
    }

    /// Root polynomial entry `e_l(λ_1..λ_N)` on the original scale (log).
    pub fn log_root(&self, l: usize) -> f64 {
        let v = self.nodes[1][l];
        if v <= 0.0 {
            f64::NEG_INFINITY
        } else {
            v.ln() + l as f64 * self.scale.ln()
        }
    }

    /// `e_l` over all eigenvalues except `λ_n`, on the rescaled values.
    /// Combines the O(log N) sibling subtrees along the path to the root.
    fn leave_one_out_scaled(&self, n: usize, l: usize) -> f64 {
        let mut poly = vec![0.0; self.cap + 1];
        poly[0] = 1.0;
        let mut idx = self.leaves + n;
        while idx > 1 {
            let sibling = idx ^ 1;
            poly = merge_poly(&poly, &self.nodes[sibling], self.cap);
            idx /= 2;
        }
        poly[l]
    }

    /// `e_l(λ_{-n})` on the original scale (log form).
    pub fn log_leave_one_out(&self, n: usize, l: usize) -> f64 {
        let v = self.leave_one_out_scaled(n, l);
        if v <= 0.0 {
            f64::NEG_INFINITY
        } else {
            v.ln() + l as f64 * self.scale.ln()
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// All singleton marginals of the k-DPP:
/// `P(i ∈ Y) = Σ_n (v_n^T e_i)^2 λ_n e_{k-1}^{-n} / e_k^N`, with the
/// leave-one-out polynomials served by the binary tree.
pub fn kdpp_singleton_marginals(spec: &SpectralDecomposition, k: usize) -> Result<DVector<f64>> {
    let n = spec.n();
    if k == 0 {
        return Ok(DVector::zeros(n));
    }
    let tree = EspLeaveOneOutTree::build(spec.eigenvalues(), k)?;
    let log_zk = tree.log_root(k);
    if log_zk == f64::NEG_INFINITY {
        return Err(DppError::InfeasibleCardinality { k });
    }
    // Pr(n ∈ J) for each eigenvalue index.
    let weights: Vec<f64> = (0..n)
        .map(|idx| {
            let lambda = spec.eigenvalues()[idx];
            if lambda <= 0.0 {
                return 0.0;
            }
            let log_loo = tree.log_leave_one_out(idx, k - 1);
            if log_loo == f64::NEG_INFINITY {
                0.0
            } else {
                (lambda.ln() + log_loo - log_zk).exp()
            }
        })
        .collect();
    let v = spec.eigenvectors();
    let mut out = DVector::zeros(n);
    for i in 0..n {
        let mut acc = 0.0;
        for (idx, w) in weights.iter().enumerate() {
            let vi = v[(i, idx)];
            acc += vi * vi * w;
        }
        out[i] = acc;
    }
    Ok(out)
}
