//! Brute-force reference implementations at desk scale.
//!
//! These enumerate every subset (or every structure) and evaluate the
//! defining formulas directly, with no shared code path with the
//! closed-form implementations they validate.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{DppError, Result};
use crate::kernel::LEnsemble;
use crate::linalg::principal_minor_det;
use crate::sdpp::{FactorTables, FactorTree, Structure};
use crate::subset::{ConditionSpec, SubsetSelection};

/// Caps on enumeration size. The subset budget bounds `2^N`; the structure
/// budget bounds `M^R`.
#[derive(Debug, Clone, Copy)]
pub struct EnumerationBudget {
    pub max_subsets: u64,
    pub max_structures: u64,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget { max_subsets: 1 << 20, max_structures: 10_000 }
    }
}

impl EnumerationBudget {
    pub fn from_env() -> Self {
        let mut budget = Self::default();
        if let Ok(v) = std::env::var("DPP_ENUM_BUDGET") {
            if let Ok(n) = v.parse::<u64>() {
                budget.max_subsets = n;
            }
        }
        budget
    }
}

/// The full probability table of an L-ensemble over all `2^N` subsets,
/// indexed by bitmask in binary-counter order.
#[derive(Debug, Clone)]
pub struct DppTable {
    n_items: usize,
    /// Unnormalized weights det(L_Y) per subset mask.
    weights: Vec<f64>,
    /// Sum of all weights, i.e. the normalizer det(L+I) by Theorem lsums.
    total: f64,
}

/// Enumerates `det(L_Y)` for every subset of the ground set.
pub fn enumerate_dpp(l: &LEnsemble, budget: &EnumerationBudget) -> Result<DppTable> {
    let n = l.n_items();
    if n >= 64 || (1u64 << n) > budget.max_subsets {
        return Err(DppError::UnsupportedScale(format!(
            "2^{n} subsets exceed the enumeration budget"
        )));
    }
    let m = l.matrix();
    let count = 1usize << n;
    let mut weights = Vec::with_capacity(count);
    let mut total = 0.0;
    for mask in 0..count as u64 {
        let items: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let w = principal_minor_det(m, &items).max(0.0);
        total += w;
        weights.push(w);
    }
    Ok(DppTable { n_items: n, weights, total })
}

impl DppTable {
    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Σ_Y det(L_Y), the brute-force normalizer.
    pub fn normalizer(&self) -> f64 {
        self.total
    }

    pub fn probability(&self, y: &SubsetSelection) -> f64 {
        self.weights[y.mask() as usize] / self.total
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w / self.total).collect()
    }

    /// P(A ⊆ Y) by summing over supersets.
    pub fn marginal(&self, a: &SubsetSelection) -> f64 {
        let am = a.mask();
        let mut sum = 0.0;
        for (mask, w) in self.weights.iter().enumerate() {
            if mask as u64 & am == am {
                sum += w;
            }
        }
        sum / self.total
    }

    /// P(A ∩ Y = ∅).
    pub fn complement_marginal(&self, a: &SubsetSelection) -> f64 {
        let am = a.mask();
        let mut sum = 0.0;
        for (mask, w) in self.weights.iter().enumerate() {
            if mask as u64 & am == 0 {
                sum += w;
            }
        }
        sum / self.total
    }

    /// P(include ⊆ Y, exclude ∩ Y = ∅).
    pub fn partial_marginal(&self, spec: &ConditionSpec) -> f64 {
        let inc = spec.include.mask();
        let exc = spec.exclude.mask();
        let mut sum = 0.0;
        for (mask, w) in self.weights.iter().enumerate() {
            let mask = mask as u64;
            if mask & inc == inc && mask & exc == 0 {
                sum += w;
            }
        }
        sum / self.total
    }

    /// Renormalized table over subsets consistent with the conditioning
    /// event, keyed by the original masks.
    pub fn conditional_table(&self, spec: &ConditionSpec) -> Result<BTreeMap<u64, f64>> {
        let inc = spec.include.mask();
        let exc = spec.exclude.mask();
        let mut table = BTreeMap::new();
        let mut total = 0.0;
        for (mask, w) in self.weights.iter().enumerate() {
            let mask = mask as u64;
            if mask & inc == inc && mask & exc == 0 {
                total += w;
                table.insert(mask, *w);
            }
        }
        if total <= 0.0 {
            return Err(DppError::ZeroProbabilityCondition);
        }
        for v in table.values_mut() {
            *v /= total;
        }
        Ok(table)
    }

    /// Σ_{|Y| = k} det(L_Y), the brute-force k-DPP normalizer.
    pub fn k_restricted_sum(&self, k: usize) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(mask, _)| (*mask as u64).count_ones() as usize == k)
            .map(|(_, w)| w)
            .sum()
    }

    /// The exact mode: the subset with maximum weight (ties to the lowest
    /// mask, i.e. the first in binary-counter order).
    pub fn mode(&self) -> (SubsetSelection, f64) {
        let (best_mask, best_w) = self
            .weights
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |(bm, bw), (m, &w)| {
                if w > bw {
                    (m, w)
                } else {
                    (bm, bw)
                }
            });
        (SubsetSelection::from_mask(best_mask as u64, self.n_items), best_w)
    }

    /// Distribution over subset cardinality.
    pub fn cardinality_distribution(&self) -> Vec<f64> {
        let mut dist = vec![0.0; self.n_items + 1];
        for (mask, w) in self.weights.iter().enumerate() {
            dist[(mask as u64).count_ones() as usize] += w / self.total;
        }
        dist
    }
}

/// Explicit materialization of a structured model: every structure plus the
/// D×N matrix `B` whose columns are `q(y) φ(y)`. The N×N kernel is derived
/// on demand since it can dwarf `B`.
#[derive(Debug, Clone)]
pub struct StructureTable {
    pub structures: Vec<Structure>,
    /// D×N matrix with columns q(y) φ(y).
    pub b: DMatrix<f64>,
}

/// Enumerates all `M^R` structures of a factor tree in lexicographic order
/// (part 0 most significant).
pub fn enumerate_structures(
    tree: &FactorTree,
    tables: &FactorTables,
    budget: &EnumerationBudget,
) -> Result<StructureTable> {
    let r = tree.n_parts();
    let m = tree.n_labels();
    let count = (m as u64).checked_pow(r as u32).filter(|&c| c <= budget.max_structures);
    let count = match count {
        Some(c) => c as usize,
        None => {
            return Err(DppError::UnsupportedScale(format!(
                "{m}^{r} structures exceed the enumeration budget"
            )))
        }
    };
    let d = tables.dim();
    let mut structures = Vec::with_capacity(count);
    let mut b = DMatrix::zeros(d, count);
    for idx in 0..count {
        let mut labels = vec![0usize; r];
        let mut rem = idx;
        for part in (0..r).rev() {
            labels[part] = rem % m;
            rem /= m;
        }
        let y = Structure::new(labels, m)?;
        let q = tables.quality(tree, &y);
        let phi = tables.features(tree, &y);
        b.set_column(idx, &(phi * q));
        structures.push(y);
    }
    Ok(StructureTable { structures, b })
}

impl StructureTable {
    pub fn n_structures(&self) -> usize {
        self.structures.len()
    }

    pub fn index_of(&self, y: &Structure) -> usize {
        self.structures
            .iter()
            .position(|s| s == y)
            .expect("structure outside the enumerated label space")
    }

    /// `L = B^T B` over the enumerated structures. Quadratic in the number
    /// of structures; intended for toy scales only.
    pub fn l_matrix(&self) -> DMatrix<f64> {
        self.b.transpose() * &self.b
    }

    /// `C = B B^T`.
    pub fn c_matrix(&self) -> DMatrix<f64> {
        &self.b * self.b.transpose()
    }

    pub fn l_ensemble(&self) -> LEnsemble {
        LEnsemble::from_matrix(self.l_matrix()).expect("B^T B is PSD")
    }

    /// Determinant of the kernel minor for the structures at `indices`,
    /// computed from the Gram of the corresponding `B` columns.
    pub fn minor_det(&self, indices: &[usize]) -> f64 {
        if indices.is_empty() {
            return 1.0;
        }
        let cols = self.b.select_columns(indices.iter());
        (cols.transpose() * cols).determinant()
    }
}

/// Reference route for the SDPP dual kernel: the assembly quadratic in the
/// number of factors,
/// `C = Σ_{α,α'} Σ_{y_α, y_{α'}} w(y_α, y_{α'}) φ_α(y_α) φ_{α'}(y_{α'})^T`,
/// with the unnormalized joint factor masses `w` computed by clamped
/// sum-product belief propagation (not by the second-order semiring).
pub fn naive_pairwise_c(model: &crate::sdpp::SdppModel) -> DMatrix<f64> {
    use crate::sdpp::bp::{belief, run_bp_forward};
    use crate::sdpp::semiring::SumProduct;

    let tree = &model.tree;
    let tables = &model.tables;
    let d = tables.dim();
    let sem = SumProduct;
    let weights: Vec<Vec<f64>> = (0..tree.n_factors())
        .map(|f| {
            (0..tree.factor_rows(f))
                .map(|idx| {
                    let q = tables.q_row(f, idx);
                    q * q
                })
                .collect()
        })
        .collect();
    let mut c = DMatrix::zeros(d, d);
    for fa in 0..tree.n_factors() {
        for fb in 0..tree.n_factors() {
            for ia in 0..tree.factor_rows(fa) {
                let labels_a = tree.assignment_labels(fa, ia);
                'rows: for ib in 0..tree.factor_rows(fb) {
                    let labels_b = tree.assignment_labels(fb, ib);
                    let mut assignments: Vec<Option<usize>> = vec![None; tree.n_parts()];
                    for (slot, &part) in tree.factor_parts(fa).iter().enumerate() {
                        assignments[part] = Some(labels_a[slot]);
                    }
                    for (slot, &part) in tree.factor_parts(fb).iter().enumerate() {
                        match assignments[part] {
                            Some(l) if l != labels_b[slot] => continue 'rows,
                            _ => assignments[part] = Some(labels_b[slot]),
                        }
                    }
                    let msgs = run_bp_forward(&sem, tree, &weights, &assignments, 0);
                    let root_belief = belief(&sem, tree, &msgs, 0);
                    // Incoming messages ignore the root's own clamp.
                    let mass: f64 = match assignments[0] {
                        Some(label) => root_belief[label],
                        None => root_belief.into_iter().sum(),
                    };
                    if mass == 0.0 {
                        continue;
                    }
                    let phi_a = tables.phi_row(fa, ia);
                    let phi_b = tables.phi_row(fb, ib);
                    c += phi_a * phi_b.transpose() * mass;
                }
            }
        }
    }
    c
}

/// Frequency table of sampler outcomes plus distances to a reference
/// distribution.
#[derive(Debug, Clone)]
pub struct EmpiricalReport {
    pub draws: u64,
    /// Total variation distance to the reference.
    pub tv: f64,
    /// Pearson chi-square statistic, degrees of freedom, and p-value,
    /// computed after pooling cells with expected count below 5.
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Compares empirical counts against reference probabilities. `counts` and
/// `reference` must be aligned; reference cells with probability 0 must have
/// zero counts to contribute nothing.
pub fn empirical_distribution(counts: &[u64], reference: &[f64]) -> EmpiricalReport {
    assert_eq!(counts.len(), reference.len());
    let draws: u64 = counts.iter().sum();
    let n = draws as f64;
    let mut tv = 0.0;
    for (c, p) in counts.iter().zip(reference) {
        tv += (*c as f64 / n - p).abs();
    }
    tv *= 0.5;

    // Pool low-expectation cells for the chi-square statistic.
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for (c, p) in counts.iter().zip(reference) {
        acc_obs += *c as f64;
        acc_exp += p * n;
        if acc_exp >= 5.0 {
            pooled.push((acc_obs, acc_exp));
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    if acc_exp > 0.0 {
        if let Some(last) = pooled.last_mut() {
            last.0 += acc_obs;
            last.1 += acc_exp;
        } else {
            pooled.push((acc_obs, acc_exp));
        }
    }
    let chi_square: f64 = pooled.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = pooled.len().saturating_sub(1);
    let p_value = chi_square_p_value(chi_square, dof);
    EmpiricalReport { draws, tv, chi_square, dof, p_value }
}

/// Upper-tail p-value of the chi-square distribution.
pub fn chi_square_p_value(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    1.0 - dist.cdf(stat)
}
