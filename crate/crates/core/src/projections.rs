//! Random projections of diversity features, the projection-dimension
//! formula, and empirical validation of the variational-distance bound
//! for cardinality-conditioned models.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{DppError, Result};

/// Generator identifier recorded with every projection matrix;
/// bit-reproducibility is promised only for matching identifiers.
pub const GENERATOR_NAME: &str = "chacha12-normal-v1";

/// A d×D Gaussian projection with entries drawn i.i.d. from N(0, 1/d),
/// regenerable bit-identically from its seed.
#[derive(Debug, Clone)]
pub struct ProjectionMatrix {
    g: DMatrix<f64>,
    seed: u64,
}

impl ProjectionMatrix {
    pub fn generate(d: usize, big_d: usize, seed: u64) -> Result<Self> {
        if d == 0 || big_d == 0 {
            return Err(DppError::InvalidInput("projection dimensions must be positive".into()));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, (1.0 / d as f64).sqrt()).expect("positive std dev");
        // Row-major fill order is part of the reproducibility contract.
        let mut g = DMatrix::zeros(d, big_d);
        for r in 0..d {
            for c in 0..big_d {
                g[(r, c)] = normal.sample(&mut rng);
            }
        }
        Ok(ProjectionMatrix { g, seed })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn generator(&self) -> &'static str {
        GENERATOR_NAME
    }

    pub fn output_dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.g.ncols()
    }
}

/// The projection dimension
/// `d = max{ 2k/ε, (24/ε²)(log(3/δ)/log N + 1)(log N + 1) + k - 1 }`,
/// rounded up.
pub fn projection_dim(k: usize, eps: f64, delta: f64, n: usize) -> Result<usize> {
    if !(0.0 < eps && eps < 0.5) || !(0.0 < delta && delta < 0.5) {
        return Err(DppError::InvalidInput(format!(
            "eps = {eps} and delta = {delta} must lie in (0, 1/2)"
        )));
    }
    if k >= n || n < 2 {
        return Err(DppError::InvalidInput(format!("need k < N and N >= 2, got k = {k}, N = {n}")));
    }
    let log_n = (n as f64).ln();
    let first = 2.0 * k as f64 / eps;
    let second = 24.0 / (eps * eps) * ((3.0 / delta).ln() / log_n + 1.0) * (log_n + 1.0)
        + k as f64
        - 1.0;
    Ok(first.max(second).ceil() as usize)
}

/// Applies the projection to feature columns: each `φ_i` becomes `G φ_i`.
/// Quality is untouched.
pub fn project_features(g: &ProjectionMatrix, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if phi.nrows() != g.input_dim() {
        return Err(DppError::InvalidInput(format!(
            "features have dimension {}, projection expects {}",
            phi.nrows(),
            g.input_dim()
        )));
    }
    Ok(g.matrix() * phi)
}

/// All subsets of `{0..n}` with at most `k` elements, ordered by size then
/// lexicographically. Errors when the count exceeds `max_subsets`.
pub fn subsets_up_to(n: usize, k: usize, max_subsets: u64) -> Result<Vec<Vec<usize>>> {
    let mut count: u64 = 0;
    let mut choose: u64 = 1;
    for size in 0..=k.min(n) {
        if size > 0 {
            choose = choose * (n - size + 1) as u64 / size as u64;
        }
        count = count.saturating_add(choose);
    }
    if count > max_subsets {
        return Err(DppError::UnsupportedScale(format!(
            "{count} subsets of size <= {k} exceed the enumeration budget"
        )));
    }
    let mut out = Vec::with_capacity(count as usize);
    for size in 0..=k.min(n) {
        let mut current: Vec<usize> = (0..size).collect();
        loop {
            out.push(current.clone());
            if size == 0 {
                break;
            }
            // Next combination in lexicographic order.
            let mut i = size;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if current[i] < n - size + i {
                    current[i] += 1;
                    for j in (i + 1)..size {
                        current[j] = current[j - 1] + 1;
                    }
                    break;
                }
                if i == 0 {
                    current.clear();
                    break;
                }
            }
            if current.is_empty() {
                break;
            }
        }
    }
    Ok(out)
}

/// Normalized probabilities of the cardinality-(<=k)-conditioned model with
/// feature columns `b` (the i-th column is `B_i = q_i φ_i`), aligned with
/// `subsets`.
pub fn cardinality_conditioned_table(b: &DMatrix<f64>, subsets: &[Vec<usize>]) -> Vec<f64> {
    let mut weights: Vec<f64> = subsets
        .iter()
        .map(|y| {
            if y.is_empty() {
                return 1.0;
            }
            let cols = b.select_columns(y.iter());
            (cols.transpose() * cols).determinant().max(0.0)
        })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    weights
}

/// Plain L1 distance between two aligned probability tables.
pub fn l1_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

/// Exact L1 distance between two cardinality-(<=k)-conditioned models that
/// share a ground set but have different feature maps (columns of `b1` and
/// `b2`).
pub fn l1_distance_exact(
    b1: &DMatrix<f64>,
    b2: &DMatrix<f64>,
    k: usize,
    max_subsets: u64,
) -> Result<f64> {
    if b1.ncols() != b2.ncols() {
        return Err(DppError::InvalidInput("models have different ground sets".into()));
    }
    let subsets = subsets_up_to(b1.ncols(), k, max_subsets)?;
    let p = cardinality_conditioned_table(b1, &subsets);
    let q = cardinality_conditioned_table(b2, &subsets);
    Ok(l1_distance(&p, &q))
}

/// Result of a bound-validation run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BoundReport {
    pub d: usize,
    pub bound: f64,
    pub mean_l1: f64,
    pub satisfied_fraction: f64,
    pub trials: usize,
    pub generator: &'static str,
}

/// Draws `trials` independent projections at the formula dimension and
/// reports how often the exact L1 distance respects `e^{6kε} - 1`.
pub fn bound_validation(
    b: &DMatrix<f64>,
    k: usize,
    eps: f64,
    delta: f64,
    trials: usize,
    seed: u64,
    max_subsets: u64,
) -> Result<BoundReport> {
    let n = b.ncols();
    let d = projection_dim(k, eps, delta, n)?;
    validate_at_dimension(b, k, d, eps, trials, seed, max_subsets)
}

/// Same validation at a caller-chosen projection dimension.
pub fn validate_at_dimension(
    b: &DMatrix<f64>,
    k: usize,
    d: usize,
    eps: f64,
    trials: usize,
    seed: u64,
    max_subsets: u64,
) -> Result<BoundReport> {
    let bound = (6.0 * k as f64 * eps).exp() - 1.0;
    let subsets = subsets_up_to(b.ncols(), k, max_subsets)?;
    let base = cardinality_conditioned_table(b, &subsets);
    let mut satisfied = 0usize;
    let mut total_l1 = 0.0;
    for t in 0..trials {
        let g = ProjectionMatrix::generate(d, b.nrows(), seed.wrapping_add(t as u64))?;
        let projected = g.matrix() * b;
        let table = cardinality_conditioned_table(&projected, &subsets);
        let l1 = l1_distance(&base, &table);
        total_l1 += l1;
        if l1 <= bound {
            satisfied += 1;
        }
    }
    Ok(BoundReport {
        d,
        bound,
        mean_l1: total_l1 / trials as f64,
        satisfied_fraction: satisfied as f64 / trials as f64,
        trials,
        generator: GENERATOR_NAME,
    })
}

/// Importance-sampled estimate of the L1 distance for models too large to
/// enumerate, with its standard error. Samples come exactly from the
/// cardinality-conditioned base model (a mixture of m-DPPs for `m <= k`
/// weighted by their normalizers), and each draw contributes
/// `|1 - p̃(Y)/p(Y)|`. The estimate is reported with its uncertainty and
/// never presented as exact.
#[derive(Debug, Clone, serde::Serialize)]
pub struct L1Estimate {
    pub mean: f64,
    pub standard_error: f64,
    pub samples: usize,
}

pub fn l1_distance_estimate<R: rand::Rng + ?Sized>(
    b1: &DMatrix<f64>,
    b2: &DMatrix<f64>,
    k: usize,
    samples: usize,
    rng: &mut R,
) -> Result<L1Estimate> {
    use crate::kdpp::{kdpp_normalizer, kdpp_sample};
    use crate::kernel::LEnsemble;

    if b1.ncols() != b2.ncols() {
        return Err(DppError::InvalidInput("models have different ground sets".into()));
    }
    if samples == 0 {
        return Err(DppError::InvalidInput("need at least one sample".into()));
    }
    let l1_model = LEnsemble::from_matrix(b1.transpose() * b1)?;
    let spec = l1_model.eigen();
    // Mixture weights over cardinalities: Z_m for m = 0..=k.
    let log_z: Vec<f64> = (0..=k.min(b1.ncols()))
        .map(|m| kdpp_normalizer(spec.eigenvalues(), m).map(|v| v.log))
        .collect::<Result<_>>()?;
    let log_z_max = log_z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if log_z_max == f64::NEG_INFINITY {
        return Err(DppError::DegenerateModel("base model has zero mass".into()));
    }
    let weights: Vec<f64> = log_z.iter().map(|&lz| (lz - log_z_max).exp()).collect();
    let z1_total: f64 = weights.iter().sum();
    // Normalizer of the comparison model over the same subsets.
    let l2_model = LEnsemble::from_matrix(b2.transpose() * b2)?;
    let spec2 = l2_model.eigen();
    let log_z2: Vec<f64> = (0..=k.min(b2.ncols()))
        .map(|m| kdpp_normalizer(spec2.eigenvalues(), m).map(|v| v.log))
        .collect::<Result<_>>()?;
    let z2_total: f64 = log_z2.iter().map(|&lz| (lz - log_z_max).exp()).sum();

    let weight_of = |b: &DMatrix<f64>, y: &[usize]| -> f64 {
        if y.is_empty() {
            return 1.0;
        }
        let cols = b.select_columns(y.iter());
        (cols.transpose() * cols).determinant().max(0.0)
    };

    let mut total = 0.0;
    let mut total_sq = 0.0;
    for _ in 0..samples {
        // Draw the cardinality, then an m-DPP sample.
        let u: f64 = rng.random::<f64>() * z1_total;
        let mut acc = 0.0;
        let mut m = 0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                m = i;
                break;
            }
        }
        let y = if m == 0 {
            crate::subset::SubsetSelection::empty()
        } else {
            kdpp_sample(&spec, m, rng)?
        };
        // Both densities carry the same exp(log_z_max) rescaling, which
        // cancels in the ratio.
        let p = weight_of(b1, y.items()) / z1_total;
        let q = weight_of(b2, y.items()) / z2_total;
        let ratio = if p > 0.0 { q / p } else { 0.0 };
        let term = (1.0 - ratio).abs();
        total += term;
        total_sq += term * term;
    }
    let mean = total / samples as f64;
    let var = (total_sq / samples as f64 - mean * mean).max(0.0);
    Ok(L1Estimate {
        mean,
        standard_error: (var / samples as f64).sqrt(),
        samples,
    })
}

/// Spearman rank correlation with an exact one-sided permutation p-value
/// for negative association (valid for small samples; n! permutations).
pub fn spearman_negative(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    assert!(n >= 3 && n <= 9, "exact permutation test supports 3..=9 points");
    let rx = ranks(xs);
    let ry = ranks(ys);
    let rho_obs = pearson(&rx, &ry);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut at_most = 0u64;
    let mut total = 0u64;
    permute(&mut perm, 0, &mut |p| {
        let shuffled: Vec<f64> = p.iter().map(|&i| ry[i]).collect();
        if pearson(&rx, &shuffled) <= rho_obs + 1e-12 {
            at_most += 1;
        }
        total += 1;
    });
    (rho_obs, at_most as f64 / total as f64)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    cov / (vx * vy).sqrt()
}

fn permute(perm: &mut Vec<usize>, i: usize, f: &mut impl FnMut(&[usize])) {
    if i == perm.len() {
        f(perm);
        return;
    }
    for j in i..perm.len() {
        perm.swap(i, j);
        permute(perm, i + 1, f);
        perm.swap(i, j);
    }
}
