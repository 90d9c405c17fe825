//! Exact inference for unstructured DPPs: normalization, likelihood,
//! marginals, conditioning, sampling, cardinality statistics, and the
//! budgeted greedy / MMR / MBR decoders.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{DppError, Result};
use crate::kernel::{l_to_k, LEnsemble, MarginalKernel, SpectralDecomposition};
use crate::linalg::{principal_minor_det, principal_minor_log_det, LogValue};
use crate::subset::{ConditionSpec, SubsetSelection};

/// `det(L + I) = Π_n (λ_n + 1)`, the L-ensemble partition function.
pub fn normalizer(spec: &SpectralDecomposition) -> LogValue {
    let log: f64 = spec.eigenvalues().iter().map(|&l| (l + 1.0).ln()).sum();
    LogValue::from_log(log)
}

/// Which algebraic route to use for the set likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodFormula {
    /// `det(L_Y) / det(L + I)`.
    LRatio,
    /// `det(I_Y K + I_{\bar Y}(I - K))`.
    KMixed,
    /// `(-1)^{|\bar Y|} det(K - I_{\bar Y})`.
    KSigned,
}

/// Probability of observing exactly `Y`. All three formulas agree to
/// relative 1e-8; they differ only in conditioning and sign behavior.
pub fn set_probability(
    l: &LEnsemble,
    y: &SubsetSelection,
    formula: LikelihoodFormula,
) -> LogValue {
    let n = l.n_items();
    match formula {
        LikelihoodFormula::LRatio => {
            let log_norm = normalizer(&l.eigen()).log;
            match principal_minor_log_det(l.matrix(), y.items()) {
                Some(log_det) => LogValue::from_log(log_det - log_norm),
                None => LogValue { log: f64::NEG_INFINITY, linear: 0.0 },
            }
        }
        LikelihoodFormula::KMixed => {
            let k = l_to_k(&l.eigen());
            let km = k.matrix();
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                if y.contains(i) {
                    m.set_row(i, &km.row(i));
                } else {
                    let mut row = -km.row(i).clone_owned();
                    row[i] += 1.0;
                    m.set_row(i, &row);
                }
            }
            LogValue::from_linear(m.determinant().max(0.0))
        }
        LikelihoodFormula::KSigned => {
            let k = l_to_k(&l.eigen());
            let mut m = k.matrix().clone();
            let mut sign = 1.0;
            for i in 0..n {
                if !y.contains(i) {
                    m[(i, i)] -= 1.0;
                    sign = -sign;
                }
            }
            LogValue::from_linear((sign * m.determinant()).max(0.0))
        }
    }
}

/// `P(A ⊆ Y) = det(K_A)`.
pub fn marginal(k: &MarginalKernel, a: &SubsetSelection) -> f64 {
    principal_minor_det(k.matrix(), a.items()).clamp(0.0, 1.0)
}

/// `P(A ∩ Y = ∅) = det(I - K_A)`, the complement DPP's marginal.
pub fn complement_marginal(k: &MarginalKernel, a: &SubsetSelection) -> f64 {
    let sub = crate::linalg::submatrix(k.matrix(), a.items(), a.items());
    let m = DMatrix::identity(a.len(), a.len()) - sub;
    m.determinant().clamp(0.0, 1.0)
}

/// Marginal probability of a partial assignment:
/// `P(A ⊆ Y, B ∩ Y = ∅) = det(K_A) det(I - K^A_B)` with
/// `K^A = I - [(L + I_{\bar A})^{-1}]_{\bar A}`.
pub fn partial_marginal(k: &MarginalKernel, spec: &ConditionSpec) -> Result<f64> {
    let n = k.n_items();
    let a = &spec.include;
    let b = &spec.exclude;
    if a.is_empty() {
        return Ok(complement_marginal(k, b));
    }
    let det_ka = principal_minor_det(k.matrix(), a.items());
    if det_ka <= 1e-14 {
        return Err(DppError::ZeroProbabilityCondition);
    }
    // (L + I_{\bar A})^{-1} = [I - (I-K) I_A]^{-1} (I-K), which avoids
    // materializing L.
    let eye = DMatrix::identity(n, n);
    let i_minus_k = &eye - k.matrix();
    let mut m = eye.clone();
    for &col in a.items() {
        let update = i_minus_k.column(col).clone_owned();
        let mut c = m.column_mut(col);
        c -= update;
    }
    let lu = m.lu();
    let g = lu
        .solve(&i_minus_k)
        .ok_or(DppError::ZeroProbabilityCondition)?;
    // K^A over the complement of A.
    let rest: Vec<usize> = (0..n).filter(|i| !a.contains(*i)).collect();
    let g_rest = crate::linalg::submatrix(&g, &rest, &rest);
    let k_cond = DMatrix::identity(rest.len(), rest.len()) - g_rest;
    let b_pos: Vec<usize> = b
        .iter()
        .map(|item| rest.binary_search(&item).expect("exclude disjoint from include"))
        .collect();
    let sub = crate::linalg::submatrix(&k_cond, &b_pos, &b_pos);
    let det_b = (DMatrix::identity(b_pos.len(), b_pos.len()) - sub).determinant();
    Ok((det_ka * det_b).clamp(0.0, 1.0))
}

/// A conditional DPP: the kernel over the surviving items together with the
/// map from new indices back to the original ground set.
#[derive(Debug, Clone)]
pub struct ConditionedDpp {
    pub model: LEnsemble,
    /// `kept[new_index]` is the original index.
    pub kept: Vec<usize>,
}

/// Conditions the L-ensemble on `include ⊆ Y` and `exclude ∩ Y = ∅`.
/// Exclusion drops rows and columns; inclusion applies
/// `L^A = ([(L + I_{\bar A})^{-1}]_{\bar A})^{-1} - I`.
pub fn condition(l: &LEnsemble, spec: &ConditionSpec) -> Result<ConditionedDpp> {
    let n = l.n_items();
    let after_exclude: Vec<usize> = (0..n).filter(|i| !spec.exclude.contains(*i)).collect();
    let l1 = crate::linalg::submatrix(l.matrix(), &after_exclude, &after_exclude);

    // Positions of the include set within the exclusion-restricted kernel.
    let a_pos: Vec<usize> = spec
        .include
        .iter()
        .map(|item| {
            after_exclude
                .binary_search(&item)
                .expect("include disjoint from exclude")
        })
        .collect();
    let kept: Vec<usize> = after_exclude
        .iter()
        .copied()
        .filter(|i| !spec.include.contains(*i))
        .collect();

    if a_pos.is_empty() {
        return Ok(ConditionedDpp { model: LEnsemble::from_matrix(l1)?, kept });
    }

    // The event A ⊆ Y has positive probability iff det(L_A) > 0.
    if principal_minor_log_det(&l1, &a_pos).is_none() {
        return Err(DppError::ZeroProbabilityCondition);
    }

    let m1 = l1.nrows();
    let mut shifted = l1;
    for i in 0..m1 {
        if a_pos.binary_search(&i).is_err() {
            shifted[(i, i)] += 1.0;
        }
    }
    let inv = shifted
        .try_inverse()
        .ok_or(DppError::ZeroProbabilityCondition)?;
    let rest: Vec<usize> = (0..m1).filter(|i| a_pos.binary_search(i).is_err()).collect();
    let restricted = crate::linalg::submatrix(&inv, &rest, &rest);
    let inner = restricted
        .try_inverse()
        .ok_or(DppError::ZeroProbabilityCondition)?;
    let cond = inner - DMatrix::identity(rest.len(), rest.len());
    // Inversion noise can leave the result slightly asymmetric or dip tiny
    // eigenvalues below zero; ingestion symmetrizes and clamps.
    let sym = (&cond + cond.transpose()) * 0.5;
    Ok(ConditionedDpp { model: LEnsemble::from_matrix(sym)?, kept })
}

const GS_REORTH_TOL: f64 = 1e-8;

/// Orthonormal basis for the subspace of `span(cols)` orthogonal to `e_i`,
/// where `cols` are orthonormal and some column has a nonzero component `i`.
/// Eliminates coordinate `i` against a pivot column, then runs modified
/// Gram-Schmidt with one re-orthogonalization pass when cancellation is
/// detected.
fn orthogonal_complement(cols: &[DVector<f64>], i: usize) -> Vec<DVector<f64>> {
    let (pivot_idx, _) = cols
        .iter()
        .enumerate()
        .map(|(idx, v)| (idx, v[i].abs()))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .expect("nonempty basis");
    let pivot = cols[pivot_idx].clone();
    let mut reduced: Vec<DVector<f64>> = Vec::with_capacity(cols.len() - 1);
    for (idx, v) in cols.iter().enumerate() {
        if idx == pivot_idx {
            continue;
        }
        let mut w = v.clone();
        w.axpy(-v[i] / pivot[i], &pivot, 1.0);
        w[i] = 0.0;
        reduced.push(w);
    }
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(reduced.len());
    for mut v in reduced {
        let pre = v.norm();
        if pre == 0.0 {
            continue;
        }
        for b in &basis {
            let c = b.dot(&v);
            v.axpy(-c, b, 1.0);
        }
        if v.norm() < GS_REORTH_TOL * pre {
            for b in &basis {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
            if v.norm() < GS_REORTH_TOL * pre {
                continue;
            }
        }
        let norm = v.norm();
        basis.push(v / norm);
    }
    basis
}

/// Phase two of the sampling algorithm: draws a set of size `|V|` from the
/// elementary DPP spanned by the orthonormal columns of `v`. Items are
/// returned in draw order, which is uniformly random over the outcome set.
pub fn sample_elementary<R: Rng + ?Sized>(v: &DMatrix<f64>, rng: &mut R) -> Vec<usize> {
    let n = v.nrows();
    let mut basis: Vec<DVector<f64>> = (0..v.ncols()).map(|c| v.column(c).clone_owned()).collect();
    let mut drawn = Vec::with_capacity(basis.len());
    while !basis.is_empty() {
        let mut mass: Vec<f64> = (0..n)
            .map(|i| basis.iter().map(|b| b[i] * b[i]).sum::<f64>())
            .collect();
        let total: f64 = mass.iter().sum();
        // Float drift: renormalize so the inverse-CDF draw covers exactly 1.
        for m in mass.iter_mut() {
            *m /= total;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = n - 1;
        for (i, m) in mass.iter().enumerate() {
            acc += m;
            if u < acc {
                chosen = i;
                break;
            }
        }
        drawn.push(chosen);
        basis = orthogonal_complement(&basis, chosen);
    }
    drawn
}

/// Samples `Y ~ P_L` given an eigendecomposition of `L`. Phase one keeps
/// eigenvector `n` independently with probability `λ_n/(λ_n+1)`; phase two
/// samples the chosen elementary DPP.
pub fn sample<R: Rng + ?Sized>(spec: &SpectralDecomposition, rng: &mut R) -> SubsetSelection {
    let items = sample_ordered(spec, rng);
    SubsetSelection::new(items, spec.n()).expect("sampled items are valid indices")
}

/// Like [`sample`], but exposes the order in which items were drawn.
pub fn sample_ordered<R: Rng + ?Sized>(spec: &SpectralDecomposition, rng: &mut R) -> Vec<usize> {
    let mut selected = Vec::new();
    for (n, &lambda) in spec.eigenvalues().iter().enumerate() {
        if rng.random::<f64>() < lambda / (lambda + 1.0) {
            selected.push(n);
        }
    }
    if selected.is_empty() {
        return Vec::new();
    }
    let v = spec.eigenvectors().select_columns(selected.iter());
    sample_elementary(&v, rng)
}

/// Mean, variance, and per-eigenvalue Bernoulli probabilities of `|Y|`.
#[derive(Debug, Clone)]
pub struct CardinalityMoments {
    pub mean: f64,
    pub variance: f64,
    pub bernoulli_probs: Vec<f64>,
}

/// `|Y|` is a sum of independent Bernoullis with rates `λ_n/(λ_n+1)`.
pub fn cardinality_moments(spec: &SpectralDecomposition) -> CardinalityMoments {
    let probs: Vec<f64> = spec.eigenvalues().iter().map(|&l| l / (l + 1.0)).collect();
    let mean = probs.iter().sum();
    let variance = probs.iter().map(|p| p * (1.0 - p)).sum();
    CardinalityMoments { mean, variance, bernoulli_probs: probs }
}

/// Items whose Schur complement falls below this (relative to the diagonal)
/// would zero the determinant and are never added by the greedy decoder.
const DEGENERATE_GAIN_TOL: f64 = 1e-12;

/// Budgeted greedy MAP approximation: repeatedly adds the feasible item
/// maximizing the probability gain per unit cost. Ties break toward the
/// lowest index. Exact MAP is NP-hard; this is the standard surrogate.
pub fn greedy_map(l: &LEnsemble, cost: &[f64], budget: f64) -> Result<SubsetSelection> {
    let n = l.n_items();
    if cost.len() != n {
        return Err(DppError::InvalidInput(format!(
            "{} costs for {} items",
            cost.len(),
            n
        )));
    }
    if cost.iter().any(|&c| !(c > 0.0)) {
        return Err(DppError::InvalidInput("costs must be positive".into()));
    }
    let m = l.matrix();
    let scale = m.diagonal().amax().max(1.0);
    let mut chosen: Vec<usize> = Vec::new();
    let mut spent = 0.0;
    // Cholesky factor (lower triangular) of L over `chosen`, grown by rank-1
    // updates; rebuilt from scratch if an update breaks down.
    let mut chol: DMatrix<f64> = DMatrix::zeros(0, 0);
    loop {
        let mut best: Option<(f64, usize, f64)> = None; // (score, item, schur)
        for i in 0..n {
            if chosen.contains(&i) || spent + cost[i] > budget {
                continue;
            }
            let schur = if chosen.is_empty() {
                m[(i, i)]
            } else {
                let rhs = DVector::from_iterator(chosen.len(), chosen.iter().map(|&j| m[(j, i)]));
                let w = chol
                    .clone()
                    .solve_lower_triangular(&rhs)
                    .expect("cholesky factor is nonsingular");
                m[(i, i)] - w.dot(&w)
            };
            if schur <= DEGENERATE_GAIN_TOL * scale {
                // Adding i would collapse det(L_Y) to zero (e.g. a parallel
                // twin of an already-selected item).
                continue;
            }
            // det(L_{Y∪i}) - det(L_Y) = det(L_Y)(schur - 1); det(L_Y) > 0 is
            // a shared positive factor, so rank by (schur - 1) / cost.
            // Scanning in index order with a strict comparison breaks ties
            // toward the lowest index.
            let score = (schur - 1.0) / cost[i];
            if best.map_or(true, |(bs, _, _)| score > bs) {
                best = Some((score, i, schur));
            }
        }
        match best {
            Some((_, i, schur)) => {
                let grown = grow_cholesky(&chol, m, &chosen, i, schur);
                chol = match grown {
                    Some(c) => c,
                    None => {
                        let mut items = chosen.clone();
                        items.push(i);
                        match crate::linalg::submatrix(m, &items, &items).cholesky() {
                            Some(c) => c.l(),
                            None => break, // genuinely degenerate; stop
                        }
                    }
                };
                spent += cost[i];
                chosen.push(i);
            }
            None => break,
        }
    }
    SubsetSelection::new(chosen, n)
}

fn grow_cholesky(
    chol: &DMatrix<f64>,
    m: &DMatrix<f64>,
    chosen: &[usize],
    item: usize,
    schur: f64,
) -> Option<DMatrix<f64>> {
    if schur <= 0.0 {
        return None;
    }
    let k = chosen.len();
    let mut out = DMatrix::zeros(k + 1, k + 1);
    out.view_mut((0, 0), (k, k)).copy_from(chol);
    if k > 0 {
        let rhs = DVector::from_iterator(k, chosen.iter().map(|&j| m[(j, item)]));
        let w = chol.clone().solve_lower_triangular(&rhs)?;
        for j in 0..k {
            out[(k, j)] = w[j];
        }
    }
    out[(k, k)] = schur.sqrt();
    Some(out)
}

/// Maximum marginal relevance baseline: iteratively picks
/// `argmax α q_i - (1-α) max_{j∈Y} S_ij` under the budget. Ties break
/// toward the lowest index.
pub fn mmr_select(
    s: &DMatrix<f64>,
    q: &[f64],
    alpha: f64,
    cost: &[f64],
    budget: f64,
) -> Result<SubsetSelection> {
    let n = s.nrows();
    if q.len() != n || cost.len() != n {
        return Err(DppError::InvalidInput("q/cost length mismatch".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(DppError::InvalidInput(format!("alpha = {alpha} outside [0, 1]")));
    }
    if cost.iter().any(|&c| !(c > 0.0)) {
        return Err(DppError::InvalidInput("costs must be positive".into()));
    }
    let mut chosen: Vec<usize> = Vec::new();
    let mut spent = 0.0;
    loop {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..n {
            if chosen.contains(&i) || spent + cost[i] > budget {
                continue;
            }
            let max_sim = chosen.iter().map(|&j| s[(i, j)]).fold(0.0f64, f64::max);
            let score = alpha * q[i] - (1.0 - alpha) * max_sim;
            if best.map_or(true, |(bs, _)| score > bs) {
                best = Some((score, i));
            }
        }
        match best {
            Some((_, i)) => {
                spent += cost[i];
                chosen.push(i);
            }
            None => break,
        }
    }
    SubsetSelection::new(chosen, n)
}

/// Jaccard similarity of item sets; both empty counts as 1.
pub fn jaccard(a: &SubsetSelection, b: &SubsetSelection) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.iter().filter(|&i| b.contains(i)).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Cardinality window for MBR decoding; samples outside are rejected and
/// redrawn.
#[derive(Debug, Clone, Copy)]
pub struct LengthWindow {
    pub min: usize,
    pub max: usize,
}

/// Minimum Bayes risk decoding: draws `r_count` samples and returns the one
/// with maximal mean similarity to all of them. The retry budget for window
/// rejections is `100 * r_count` total draws.
pub fn mbr_decode<R, S, F>(
    mut sampler: S,
    r_count: usize,
    sim: F,
    window: Option<LengthWindow>,
    rng: &mut R,
) -> Result<SubsetSelection>
where
    R: Rng + ?Sized,
    S: FnMut(&mut R) -> SubsetSelection,
    F: Fn(&SubsetSelection, &SubsetSelection) -> f64,
{
    if r_count == 0 {
        return Err(DppError::InvalidInput("MBR requires at least one sample".into()));
    }
    let mut samples: Vec<SubsetSelection> = Vec::with_capacity(r_count);
    let mut attempts = 0usize;
    let attempt_budget = 100 * r_count;
    while samples.len() < r_count {
        if attempts >= attempt_budget {
            return Err(DppError::InfeasibleWindow);
        }
        attempts += 1;
        let y = sampler(rng);
        if let Some(w) = window {
            if y.len() < w.min || y.len() > w.max {
                continue;
            }
        }
        samples.push(y);
    }
    let mut best_idx = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, cand) in samples.iter().enumerate() {
        let score: f64 = samples.iter().map(|other| sim(cand, other)).sum::<f64>()
            / r_count as f64;
        if score > best_score {
            best_score = score;
            best_idx = i;
        }
    }
    Ok(samples.swap_remove(best_idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gram_from_features, tests::random_unit_columns};
    use crate::oracle::{empirical_distribution, enumerate_dpp, EnumerationBudget};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_gram(seed: u64, n: usize, d: usize) -> LEnsemble {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let phi = random_unit_columns(&mut rng, d, n);
        let q = DVector::from_fn(n, |_, _| rng.random_range(0.2..1.8));
        gram_from_features(q, phi).unwrap()
    }

    #[test]
    fn normalizer_trivial_cases() {
        let zero = LEnsemble::from_matrix(DMatrix::zeros(3, 3)).unwrap();
        assert_relative_eq!(normalizer(&zero.eigen()).linear, 1.0, epsilon = 1e-12);
        let eye = LEnsemble::from_matrix(DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(normalizer(&eye.eigen()).linear, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn normalizer_matches_enumeration() {
        let l = random_gram(21, 10, 6);
        let table = enumerate_dpp(&l, &EnumerationBudget::default()).unwrap();
        let closed = normalizer(&l.eigen());
        assert_relative_eq!(closed.linear, table.normalizer(), max_relative = 1e-10);
    }

    #[test]
    fn set_probability_trivial_cases() {
        // L = I, N = 2: two independent coins at p = 1/2.
        let eye = LEnsemble::from_matrix(DMatrix::identity(2, 2)).unwrap();
        let y = SubsetSelection::new(vec![1], 2).unwrap();
        for f in [LikelihoodFormula::LRatio, LikelihoodFormula::KMixed, LikelihoodFormula::KSigned]
        {
            assert_relative_eq!(set_probability(&eye, &y, f).linear, 0.25, epsilon = 1e-12);
        }
        // Empty set: 1 / det(L + I).
        let l = random_gram(22, 5, 3);
        let empty = SubsetSelection::empty();
        let expect = 1.0 / normalizer(&l.eigen()).linear;
        assert_relative_eq!(
            set_probability(&l, &empty, LikelihoodFormula::LRatio).linear,
            expect,
            max_relative = 1e-10
        );
    }

    #[test]
    fn likelihood_formulas_agree() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for trial in 0..20 {
            // Full-rank kernels: every subset has strictly positive
            // probability, so relative agreement is well-posed.
            let l = random_gram(100 + trial, 7, 7);
            let mask: u64 = rng.random_range(0..(1 << 7));
            let y = SubsetSelection::from_mask(mask, 7);
            let a = set_probability(&l, &y, LikelihoodFormula::LRatio).linear;
            let b = set_probability(&l, &y, LikelihoodFormula::KMixed).linear;
            let c = set_probability(&l, &y, LikelihoodFormula::KSigned).linear;
            assert!((a - b).abs() / a < 1e-8, "LRatio {a} vs KMixed {b}");
            assert!((a - c).abs() / a < 1e-8, "LRatio {a} vs KSigned {c}");
        }

        // Rank-deficient case: subsets beyond the rank have probability
        // zero under every formula (up to determinant noise).
        let l = random_gram(200, 6, 3);
        let y = SubsetSelection::full(6);
        for f in [LikelihoodFormula::LRatio, LikelihoodFormula::KMixed, LikelihoodFormula::KSigned]
        {
            assert!(set_probability(&l, &y, f).linear < 1e-12);
        }
    }

    #[test]
    fn marginals_match_enumeration() {
        let l = random_gram(24, 9, 6);
        let k = l_to_k(&l.eigen());
        let table = enumerate_dpp(&l, &EnumerationBudget::default()).unwrap();
        assert_relative_eq!(marginal(&k, &SubsetSelection::empty()), 1.0);
        for i in 0..9 {
            let a = SubsetSelection::new(vec![i], 9).unwrap();
            assert_relative_eq!(marginal(&k, &a), k.matrix()[(i, i)], epsilon = 1e-12);
        }
        let a = SubsetSelection::new(vec![1, 4, 7], 9).unwrap();
        assert_relative_eq!(marginal(&k, &a), table.marginal(&a), max_relative = 1e-9);
    }

    #[test]
    fn complement_marginal_matches_enumeration() {
        let zero = MarginalKernel::from_matrix(DMatrix::zeros(4, 4)).unwrap();
        let a = SubsetSelection::new(vec![0, 2], 4).unwrap();
        assert_relative_eq!(complement_marginal(&zero, &a), 1.0);

        let l = random_gram(25, 8, 5);
        let k = l_to_k(&l.eigen());
        let table = enumerate_dpp(&l, &EnumerationBudget::default()).unwrap();
        for i in 0..8 {
            let s = SubsetSelection::new(vec![i], 8).unwrap();
            assert_relative_eq!(
                complement_marginal(&k, &s),
                1.0 - k.matrix()[(i, i)],
                epsilon = 1e-12
            );
        }
        let a = SubsetSelection::new(vec![0, 3, 6], 8).unwrap();
        assert!((complement_marginal(&k, &a) - table.complement_marginal(&a)).abs() < 1e-9);
    }

    #[test]
    fn partial_marginal_matches_enumeration() {
        let l = random_gram(26, 7, 5);
        let k = l_to_k(&l.eigen());
        let table = enumerate_dpp(&l, &EnumerationBudget::default()).unwrap();

        let empty = ConditionSpec::default();
        assert_relative_eq!(partial_marginal(&k, &empty).unwrap(), 1.0);

        // include empty reduces to the complement marginal.
        let spec = ConditionSpec::new(
            SubsetSelection::empty(),
            SubsetSelection::new(vec![2, 5], 7).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(
            partial_marginal(&k, &spec).unwrap(),
            complement_marginal(&k, &spec.exclude),
            epsilon = 1e-12
        );

        let spec = ConditionSpec::new(
            SubsetSelection::new(vec![0, 3], 7).unwrap(),
            SubsetSelection::new(vec![1, 6], 7).unwrap(),
        )
        .unwrap();
        let got = partial_marginal(&k, &spec).unwrap();
        let want = table.partial_marginal(&spec);
        assert_relative_eq!(got, want, max_relative = 1e-8);
    }

    #[test]
    fn conditioning_matches_renormalization() {
        let l = random_gram(27, 6, 4);
        let table = enumerate_dpp(&l, &EnumerationBudget::default()).unwrap();
        let spec = ConditionSpec::new(
            SubsetSelection::new(vec![0], 6).unwrap(),
            SubsetSelection::new(vec![3], 6).unwrap(),
        )
        .unwrap();
        let cond = condition(&l, &spec).unwrap();
        assert_eq!(cond.kept, vec![1, 2, 4, 5]);
        let oracle_table = table.conditional_table(&spec).unwrap();
        let cond_eig = cond.model.eigen();
        let log_norm = normalizer(&cond_eig).log;
        for (mask, want) in oracle_table {
            // Map original subset to the conditional index space.
            let extra: Vec<usize> = (0..6)
                .filter(|i| mask >> i & 1 == 1 && !spec.include.contains(*i))
                .map(|i| cond.kept.binary_search(&i).unwrap())
                .collect();
            let got = match principal_minor_log_det(cond.model.matrix(), &extra) {
                Some(ld) => (ld - log_norm).exp(),
                None => 0.0,
            };
            assert_relative_eq!(got, want, max_relative = 1e-8, epsilon = 1e-12);
        }
    }

    #[test]
    fn conditioning_edge_cases() {
        // Excluding an item just drops its row and column. Full feature
        // rank so that conditioning on the whole ground set is feasible.
        let l = random_gram(28, 5, 5);
        let spec = ConditionSpec::new(
            SubsetSelection::empty(),
            SubsetSelection::new(vec![2], 5).unwrap(),
        )
        .unwrap();
        let cond = condition(&l, &spec).unwrap();
        let kept = [0usize, 1, 3, 4];
        for (a, &i) in kept.iter().enumerate() {
            for (b, &j) in kept.iter().enumerate() {
                assert_relative_eq!(cond.model.matrix()[(a, b)], l.matrix()[(i, j)]);
            }
        }

        // Conditioning on the full ground set (det(L) > 0) leaves the empty
        // conditional model with probability one.
        let spec = ConditionSpec::new(SubsetSelection::full(5), SubsetSelection::empty()).unwrap();
        let cond = condition(&l, &spec).unwrap();
        assert!(cond.kept.is_empty());
        assert_eq!(cond.model.n_items(), 0);

        // Zero-probability include set errors.
        let two = LEnsemble::from_matrix(DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 1.0, 1.0, 1.0],
        ))
        .unwrap();
        let spec =
            ConditionSpec::new(SubsetSelection::full(2), SubsetSelection::empty()).unwrap();
        assert!(matches!(
            condition(&two, &spec),
            Err(DppError::ZeroProbabilityCondition)
        ));
    }

    #[test]
    fn conditioning_consistency_with_partial_marginal() {
        // condition(include=A) then marginal of B equals the
        // partial_marginal-derived conditional.
        let l = random_gram(29, 6, 5);
        let k = l_to_k(&l.eigen());
        let a = SubsetSelection::new(vec![1], 6).unwrap();
        let b = SubsetSelection::new(vec![3, 4], 6).unwrap();
        let spec = ConditionSpec::new(a.clone(), SubsetSelection::empty()).unwrap();
        let cond = condition(&l, &spec).unwrap();
        let kc = l_to_k(&cond.model.eigen());
        let b_new = SubsetSelection::new(
            b.iter().map(|i| cond.kept.binary_search(&i).unwrap()).collect(),
            cond.kept.len(),
        )
        .unwrap();
        let lhs = marginal(&kc, &b_new);

        // P(B ⊆ Y | A ⊆ Y) = P(A ⊆ Y, nothing excluded, B included) / P(A ⊆ Y)
        let joint = {
            let mut items: Vec<usize> = a.iter().chain(b.iter()).collect();
            items.sort_unstable();
            marginal(&k, &SubsetSelection::new(items, 6).unwrap())
        };
        let rhs = joint / marginal(&k, &a);
        assert_relative_eq!(lhs, rhs, max_relative = 1e-8);
    }

    #[test]
    fn zero_kernel_samples_empty() {
        let zero = LEnsemble::from_matrix(DMatrix::zeros(4, 4)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert!(sample(&zero.eigen(), &mut rng).is_empty());
        }
    }

    #[test]
    fn elementary_dpp_has_fixed_cardinality() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let basis = crate::kernel::tests::random_orthonormal(&mut rng, 6);
        let v = basis.columns(0, 3).clone_owned();
        for _ in 0..200 {
            assert_eq!(sample_elementary(&v, &mut rng).len(), 3);
        }
    }

    #[test]
    fn sampling_law_matches_enumeration() {
        let l = random_gram(30, 6, 4);
        let table = enumerate_dpp(&l, &EnumerationBudget::default()).unwrap();
        let spec = l.eigen();
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let draws = 200_000u64;
        let mut counts = vec![0u64; 1 << 6];
        for _ in 0..draws {
            counts[sample(&spec, &mut rng).mask() as usize] += 1;
        }
        let report = empirical_distribution(&counts, &table.probabilities());
        assert!(report.tv < 0.01, "TV = {}", report.tv);
    }

    #[test]
    fn sampler_emits_uniform_order() {
        // An elementary DPP with |V| = 3 always draws 3 items; conditioned on
        // the most likely outcome set, each of the 6 orders should appear
        // with frequency 1/6 within 3 sigma.
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        let basis = crate::kernel::tests::random_orthonormal(&mut rng, 5);
        let v = basis.columns(0, 3).clone_owned();
        let mut outcome_counts = std::collections::BTreeMap::<Vec<usize>, u64>::new();
        let mut order_counts = std::collections::BTreeMap::<Vec<usize>, u64>::new();
        let draws = 60_000;
        for _ in 0..draws {
            let order = sample_elementary(&v, &mut rng);
            let mut set = order.clone();
            set.sort_unstable();
            *outcome_counts.entry(set).or_default() += 1;
            order_counts.entry(order).and_modify(|c| *c += 1).or_insert(1);
        }
        let (target, n_target) =
            outcome_counts.iter().max_by_key(|(_, &c)| c).map(|(s, &c)| (s.clone(), c)).unwrap();
        let p = 1.0 / 6.0;
        let sigma = (p * (1.0 - p) / n_target as f64).sqrt();
        for perm in permutations(&target) {
            let freq = *order_counts.get(&perm).unwrap_or(&0) as f64 / n_target as f64;
            assert!(
                (freq - p).abs() <= 3.0 * sigma + 1e-9,
                "order {perm:?} frequency {freq} vs {p}"
            );
        }
    }

    fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for (i, &x) in items.iter().enumerate() {
            let mut rest = items.to_vec();
            rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, x);
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn cardinality_moment_identities() {
        let eye = LEnsemble::from_matrix(DMatrix::identity(4, 4)).unwrap();
        let m = cardinality_moments(&eye.eigen());
        assert_relative_eq!(m.mean, 2.0, epsilon = 1e-12);
        assert_relative_eq!(m.variance, 1.0, epsilon = 1e-12);

        let l = random_gram(33, 7, 5);
        let spec = l.eigen();
        let m = cardinality_moments(&spec);
        let k = l_to_k(&spec);
        assert_relative_eq!(m.mean, k.matrix().trace(), max_relative = 1e-10);
        assert_relative_eq!(
            m.mean,
            m.bernoulli_probs.iter().sum::<f64>(),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            m.variance,
            m.bernoulli_probs.iter().map(|p| p * (1.0 - p)).sum::<f64>(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn empirical_cardinality_within_standard_error() {
        let l = random_gram(34, 6, 4);
        let spec = l.eigen();
        let m = cardinality_moments(&spec);
        let mut rng = ChaCha12Rng::seed_from_u64(35);
        let draws = 100_000;
        let mut total = 0usize;
        for _ in 0..draws {
            total += sample(&spec, &mut rng).len();
        }
        let mean = total as f64 / draws as f64;
        let se = (m.variance / draws as f64).sqrt();
        assert!((mean - m.mean).abs() <= 3.0 * se, "{mean} vs {}", m.mean);
    }

    #[test]
    fn log_submodularity() {
        let l = random_gram(36, 5, 5);
        let m = l.matrix();
        let n = 5;
        for i in 0..n {
            for y_mask in 0u64..(1 << n) {
                if y_mask >> i & 1 == 1 {
                    continue;
                }
                for yp_mask in 0u64..(1 << n) {
                    if yp_mask >> i & 1 == 1 || y_mask & yp_mask != y_mask {
                        continue;
                    }
                    let idx =
                        |mask: u64| -> Vec<usize> { (0..n).filter(|j| mask >> j & 1 == 1).collect() };
                    let ld = |mask: u64| principal_minor_log_det(m, &idx(mask));
                    let (y, yi) = (ld(y_mask), ld(y_mask | 1 << i));
                    let (yp, ypi) = (ld(yp_mask), ld(yp_mask | 1 << i));
                    if let (Some(y), Some(yi), Some(yp), Some(ypi)) = (y, yi, yp, ypi) {
                        assert!(yi - y >= ypi - yp - 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn restriction_property() {
        // Marginals restricted to A form a DPP with kernel K_A.
        let l = random_gram(37, 7, 5);
        let k = l_to_k(&l.eigen());
        let table = enumerate_dpp(&l, &EnumerationBudget::default()).unwrap();
        let a = [1usize, 3, 5];
        let ka = crate::linalg::submatrix(k.matrix(), &a, &a);
        for sub_mask in 0u64..(1 << 3) {
            let local: Vec<usize> = (0..3).filter(|j| sub_mask >> j & 1 == 1).collect();
            let global: Vec<usize> = local.iter().map(|&j| a[j]).collect();
            let want = table.marginal(&SubsetSelection::new(global, 7).unwrap());
            let got = principal_minor_det(&ka, &local);
            assert_relative_eq!(got, want, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn greedy_map_basics() {
        let l = random_gram(38, 6, 4);
        // Budget below the cheapest cost returns the empty set.
        let y = greedy_map(&l, &[1.0; 6], 0.5).unwrap();
        assert!(y.is_empty());

        // Duplicated item (parallel feature) is never taken after its twin.
        let q = DVector::from_vec(vec![2.0, 2.0, 1.0]);
        let phi = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let l = gram_from_features(q, phi).unwrap();
        let y = greedy_map(&l, &[1.0; 3], 3.0).unwrap();
        assert_eq!(y.items(), &[0, 2]);
    }

    #[test]
    fn greedy_map_vs_exhaustive() {
        let l = random_gram(39, 10, 8);
        let y = greedy_map(&l, &[1.0; 10], 10.0).unwrap();
        let achieved = principal_minor_det(l.matrix(), y.items());
        let table = enumerate_dpp(&l, &EnumerationBudget::default()).unwrap();
        let (_, best) = table.mode();
        assert!(achieved <= best + 1e-12);
        assert!(achieved > 0.0);
        println!("greedy/exhaustive det ratio: {:.4}", achieved / best);
    }

    #[test]
    fn mmr_select_basics() {
        let n = 4;
        let s = DMatrix::identity(n, n);
        let q = [0.5, 2.0, 1.0, 1.5];
        // alpha = 1: pure quality-sorted greedy under budget.
        let y = mmr_select(&s, &q, 1.0, &[1.0; 4], 2.0).unwrap();
        assert_eq!(y.items(), &[1, 3]);

        // alpha = 0 with an all-equal S: ties break to the lowest index.
        let s = DMatrix::from_element(n, n, 1.0);
        let y = mmr_select(&s, &q, 0.0, &[1.0; 4], 2.0).unwrap();
        assert_eq!(y.items(), &[0, 1]);
    }

    #[test]
    fn mmr_differs_from_greedy_map_on_redundant_instance() {
        // Three near-duplicate high-quality items plus diverse low-quality
        // ones; MMR's hard max-similarity penalty and the determinant's soft
        // volume objective pick different sets.
        let mut phi = DMatrix::zeros(4, 8);
        // Items 0-2: tight cluster with big quality.
        for i in 0..3 {
            phi[(0, i)] = 1.0;
            phi[(1, i)] = 0.05 * i as f64;
        }
        // Items 3-7: spread directions, modest quality.
        for i in 3..8 {
            phi[(i % 4, i)] = 1.0;
            phi[((i + 1) % 4, i)] = 0.3;
        }
        for i in 0..8 {
            let norm = phi.column(i).norm();
            let mut c = phi.column_mut(i);
            c /= norm;
        }
        let q_vals = [3.0, 2.9, 2.8, 1.0, 1.0, 1.0, 1.0, 1.0];
        let q = DVector::from_row_slice(&q_vals);
        let l = gram_from_features(q, phi).unwrap();
        let s = similarity_of(&l);
        let budget = 3.0;
        let greedy = greedy_map(&l, &[1.0; 8], budget).unwrap();
        let mmr = mmr_select(&s, &q_vals, 0.9, &[1.0; 8], budget).unwrap();
        assert_ne!(greedy, mmr, "fixture must separate the two decoders");
        // Frozen outputs: the determinant objective breaks out of the
        // high-quality cluster, the MMR score at alpha = 0.9 does not.
        assert_eq!(greedy.items(), &[0, 5, 6]);
        assert_eq!(mmr.items(), &[0, 1, 2]);
    }

    fn similarity_of(l: &LEnsemble) -> DMatrix<f64> {
        crate::kernel::similarity(l).unwrap()
    }

    #[test]
    fn mbr_decode_basics() {
        let l = random_gram(40, 5, 4);
        let spec = l.eigen();
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        // R = 1 returns the single sample.
        let mut rng2 = rng.clone();
        let direct = sample(&spec, &mut rng2);
        let decoded =
            mbr_decode(|r| sample(&spec, r), 1, jaccard, None, &mut rng).unwrap();
        assert_eq!(direct, decoded);

        // Exact-match similarity returns a modal sample among duplicates.
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let exact = |a: &SubsetSelection, b: &SubsetSelection| if a == b { 1.0 } else { 0.0 };
        let decoded = mbr_decode(|r| sample(&spec, r), 50, exact, None, &mut rng).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let mut counts = std::collections::BTreeMap::<SubsetSelection, usize>::new();
        for _ in 0..50 {
            *counts.entry(sample(&spec, &mut rng)).or_default() += 1;
        }
        let best = counts.values().max().copied().unwrap();
        assert_eq!(counts.get(&decoded).copied().unwrap(), best);

        // An impossible window exhausts the retry budget.
        let window = LengthWindow { min: 6, max: 6 };
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        assert!(matches!(
            mbr_decode(|r| sample(&spec, r), 5, jaccard, Some(window), &mut rng),
            Err(DppError::InfeasibleWindow)
        ));
    }

    #[test]
    fn mbr_beats_uniform_draw_on_expected_jaccard() {
        let l = random_gram(44, 6, 4);
        let spec = l.eigen();
        let mut rng = ChaCha12Rng::seed_from_u64(45);
        let mut decoded_total = 0.0;
        let mut uniform_total = 0.0;
        for _ in 0..50 {
            let decoded =
                mbr_decode(|r| sample(&spec, r), 100, jaccard, None, &mut rng).unwrap();
            let uniform = sample(&spec, &mut rng);
            for _ in 0..40 {
                let fresh = sample(&spec, &mut rng);
                decoded_total += jaccard(&decoded, &fresh);
                uniform_total += jaccard(&uniform, &fresh);
            }
        }
        assert!(
            decoded_total >= uniform_total,
            "decoded {decoded_total} vs uniform {uniform_total}"
        );
    }
}
