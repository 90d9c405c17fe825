//! Maximum-likelihood learning for conditional DPPs.
//!
//! The quality model is log-linear, `q_i = exp(θ^T f_i / 2)`, with
//! diversity features held fixed; its log-likelihood is concave in `θ` and
//! the gradient needs only the marginal-kernel diagonal. Mixtures of fixed
//! k-DPP experts are learned with a logistic pairwise-preference loss,
//! convex in the simplex weights.

use nalgebra::{DMatrix, DVector};

use crate::error::{DppError, Result};
use crate::kdpp::kdpp_probability;
use crate::kernel::{LEnsemble, QualityDiversity};
use crate::linalg::principal_minor_log_det;
use crate::subset::SubsetSelection;

/// One training instance: per-item quality features (m×N), unit-norm
/// diversity features (D×N), and the labeled subset.
#[derive(Debug, Clone)]
pub struct ConditionalInstance {
    quality_features: DMatrix<f64>,
    diversity: DMatrix<f64>,
    label: SubsetSelection,
}

impl ConditionalInstance {
    pub fn new(
        quality_features: DMatrix<f64>,
        diversity: DMatrix<f64>,
        label: SubsetSelection,
    ) -> Result<Self> {
        let n = quality_features.ncols();
        if diversity.ncols() != n {
            return Err(DppError::InvalidInput(format!(
                "{} quality columns vs {} diversity columns",
                n,
                diversity.ncols()
            )));
        }
        if label.items().iter().any(|&i| i >= n) {
            return Err(DppError::InvalidInput("label index out of range".into()));
        }
        let mut diversity = diversity;
        for i in 0..n {
            let norm = diversity.column(i).norm();
            if norm == 0.0 {
                return Err(DppError::InvalidInput(format!(
                    "diversity column {i} has zero norm"
                )));
            }
            if (norm - 1.0).abs() > 1e-6 {
                return Err(DppError::InvalidInput(format!(
                    "diversity column {i} has norm {norm}"
                )));
            }
            let mut col = diversity.column_mut(i);
            col /= norm;
        }
        Ok(ConditionalInstance { quality_features, diversity, label })
    }

    pub fn n_items(&self) -> usize {
        self.quality_features.ncols()
    }

    pub fn feature_dim(&self) -> usize {
        self.quality_features.nrows()
    }

    pub fn quality_features(&self) -> &DMatrix<f64> {
        &self.quality_features
    }

    pub fn diversity(&self) -> &DMatrix<f64> {
        &self.diversity
    }

    pub fn label(&self) -> &SubsetSelection {
        &self.label
    }

    /// The conditional kernel at parameters `θ`.
    pub fn kernel(&self, theta: &DVector<f64>) -> LEnsemble {
        let q = quality_scores(theta, self);
        let qd = QualityDiversity::new(q, self.diversity.clone())
            .expect("validated at construction");
        LEnsemble::from_features(&qd)
    }
}

/// `q_i = exp(θ^T f_i / 2)`.
pub fn quality_scores(theta: &DVector<f64>, instance: &ConditionalInstance) -> DVector<f64> {
    DVector::from_iterator(
        instance.n_items(),
        instance
            .quality_features
            .column_iter()
            .map(|f| (0.5 * theta.dot(&f)).exp()),
    )
}

/// Conditional log-likelihood `Σ_t [log det(L_{Y_t}) - log det(L_t + I)]`.
/// An instance whose labeled set has zero similarity volume contributes
/// `-inf`.
pub fn log_likelihood(theta: &DVector<f64>, data: &[ConditionalInstance]) -> f64 {
    let mut total = 0.0;
    for inst in data {
        let l = inst.kernel(theta);
        let log_num = match principal_minor_log_det(l.matrix(), inst.label.items()) {
            Some(v) => v,
            None => return f64::NEG_INFINITY,
        };
        let log_norm = crate::inference::normalizer(&l.eigen()).log;
        total += log_num - log_norm;
    }
    total
}

/// Gradient of the log-likelihood: empirical minus expected feature counts,
/// `Σ_t [Σ_{i∈Y_t} f_i - Σ_i K_ii f_i]`, with `K_ii` assembled from the
/// eigendecomposition in O(N^2) per instance.
pub fn gradient(theta: &DVector<f64>, data: &[ConditionalInstance]) -> DVector<f64> {
    let m = theta.len();
    let mut grad = DVector::zeros(m);
    for inst in data {
        let l = inst.kernel(theta);
        let spec = l.eigen();
        let rescaled: Vec<f64> =
            spec.eigenvalues().iter().map(|&v| v / (v + 1.0)).collect();
        for i in inst.label.iter() {
            grad += inst.quality_features.column(i);
        }
        for i in 0..inst.n_items() {
            let mut k_ii = 0.0;
            for (n, &w) in rescaled.iter().enumerate() {
                let v = spec.eigenvectors()[(i, n)];
                k_ii += w * v * v;
            }
            grad -= inst.quality_features.column(i) * k_ii;
        }
    }
    grad
}

/// Options for quality-model training.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Stop when the gradient infinity norm falls below this.
    pub tol: f64,
    pub max_iters: usize,
    /// L2 penalty coefficient (zero-mean Gaussian prior); 0 disables it.
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { tol: 1e-6, max_iters: 500, l2: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub theta: DVector<f64>,
    pub iterations: usize,
    pub grad_inf_norm: f64,
    pub objective: f64,
    /// Instances whose labeled set had zero similarity volume, dropped
    /// before optimization.
    pub dropped: usize,
}

/// Gradient ascent with Armijo backtracking on the (concave) penalized
/// log-likelihood. The objective never decreases across accepted steps.
pub fn train_quality(
    data: &[ConditionalInstance],
    init: DVector<f64>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    // Drop degenerate instances so the objective stays finite.
    let kept: Vec<ConditionalInstance> = data
        .iter()
        .filter(|inst| {
            let l = inst.kernel(&init);
            principal_minor_log_det(l.matrix(), inst.label.items()).is_some()
        })
        .cloned()
        .collect();
    let dropped = data.len() - kept.len();
    let objective = |theta: &DVector<f64>| -> f64 {
        log_likelihood(theta, &kept) - 0.5 * config.l2 * theta.norm_squared()
    };
    let grad_fn = |theta: &DVector<f64>| -> DVector<f64> {
        gradient(theta, &kept) - theta * config.l2
    };

    let mut theta = init;
    let mut obj = objective(&theta);
    if !obj.is_finite() {
        return Err(DppError::Diverged(format!("initial objective {obj}")));
    }
    let mut step = 1.0f64;
    let mut iterations = 0;
    let mut grad_inf = f64::INFINITY;
    while iterations < config.max_iters {
        let g = grad_fn(&theta);
        grad_inf = g.amax();
        if grad_inf <= config.tol {
            break;
        }
        iterations += 1;
        let g_sq = g.norm_squared();
        let mut accepted = false;
        let mut trial = step * 2.0;
        while trial > 1e-16 {
            let candidate = &theta + &g * trial;
            let cand_obj = objective(&candidate);
            if cand_obj.is_finite() && cand_obj >= obj + 1e-4 * trial * g_sq {
                theta = candidate;
                obj = cand_obj;
                step = trial;
                accepted = true;
                break;
            }
            trial *= 0.5;
        }
        if !accepted {
            break; // no ascent direction left at working precision
        }
    }
    if !obj.is_finite() {
        return Err(DppError::Diverged(format!("objective {obj}")));
    }
    Ok(TrainReport { theta, iterations, grad_inf_norm: grad_inf, objective: obj, dropped })
}

/// Mixture weights over fixed k-DPP experts: a point on the simplex.
#[derive(Debug, Clone)]
pub struct MixtureParams {
    pub theta: DVector<f64>,
}

impl MixtureParams {
    pub fn uniform(d: usize) -> Self {
        MixtureParams { theta: DVector::from_element(d, 1.0 / d as f64) }
    }
}

/// Precomputed per-pair expert gaps
/// `δ^t_l = -γ [P^k_{L_l}(Y^+_t) - P^k_{L_l}(Y^-_t)]`.
pub fn mixture_deltas(
    experts: &[LEnsemble],
    pairs: &[(SubsetSelection, SubsetSelection)],
    k: usize,
    gamma: f64,
) -> Result<Vec<DVector<f64>>> {
    let mut deltas = Vec::with_capacity(pairs.len());
    for (pos, neg) in pairs {
        if pos.len() != k || neg.len() != k {
            return Err(DppError::CardinalityMismatch {
                expected: k,
                got: if pos.len() != k { pos.len() } else { neg.len() },
            });
        }
        let mut delta = DVector::zeros(experts.len());
        for (l, expert) in experts.iter().enumerate() {
            let p_pos = kdpp_probability(expert, pos, k)?.linear;
            let p_neg = kdpp_probability(expert, neg, k)?.linear;
            delta[l] = -gamma * (p_pos - p_neg);
        }
        deltas.push(delta);
    }
    Ok(deltas)
}

/// Logistic preference loss `Σ_t log(1 + exp(θ^T δ^t))` and its gradient
/// `Σ_t σ(θ^T δ^t) δ^t`.
pub fn mixture_objective_grad(
    theta: &DVector<f64>,
    deltas: &[DVector<f64>],
) -> (f64, DVector<f64>) {
    let mut loss = 0.0;
    let mut grad = DVector::zeros(theta.len());
    for delta in deltas {
        let z = theta.dot(delta);
        // log(1 + e^z) computed stably.
        loss += if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        let sigma = 1.0 / (1.0 + (-z).exp());
        grad += delta * sigma;
    }
    (loss, grad)
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let d = v.len();
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    let _ = d;
    v.map(|x| (x - tau).max(0.0))
}

#[derive(Debug, Clone)]
pub struct MixtureReport {
    pub params: MixtureParams,
    pub loss: f64,
    pub iterations: usize,
}

/// Projected gradient descent on the mixture loss with backtracking; the
/// loss never increases between accepted iterates.
pub fn train_mixture(
    deltas: &[DVector<f64>],
    d: usize,
    max_iters: usize,
    tol: f64,
) -> Result<MixtureReport> {
    let mut params = MixtureParams::uniform(d);
    let (mut loss, mut grad) = mixture_objective_grad(&params.theta, deltas);
    let mut step = 1.0f64;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut trial = step * 2.0;
        let mut accepted = false;
        while trial > 1e-16 {
            let candidate = project_simplex(&(&params.theta - &grad * trial));
            let move_sq = (&candidate - &params.theta).norm_squared();
            if move_sq <= tol * tol {
                // converged: the projected step no longer moves us
                let (l2, _) = mixture_objective_grad(&candidate, deltas);
                if l2 <= loss {
                    params.theta = candidate;
                    loss = l2;
                }
                return Ok(MixtureReport { params, loss, iterations });
            }
            let (cand_loss, cand_grad) = mixture_objective_grad(&candidate, deltas);
            if cand_loss <= loss - 1e-4 * move_sq / trial {
                params.theta = candidate;
                loss = cand_loss;
                grad = cand_grad;
                step = trial;
                accepted = true;
                break;
            }
            trial *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(MixtureReport { params, loss, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::sample;
    use crate::oracle::{enumerate_dpp, EnumerationBudget};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn unit_columns(rng: &mut impl Rng, d: usize, n: usize) -> DMatrix<f64> {
        crate::kernel::tests::random_unit_columns(rng, d, n)
    }

    fn random_instance(seed: u64, n: usize, m: usize, label: Vec<usize>) -> ConditionalInstance {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let f = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let phi = unit_columns(&mut rng, n, n);
        ConditionalInstance::new(f, phi, SubsetSelection::new(label, n).unwrap()).unwrap()
    }

    #[test]
    fn quality_score_formula() {
        let inst = random_instance(120, 4, 3, vec![0]);
        let zero = DVector::zeros(3);
        let q = quality_scores(&zero, &inst);
        for v in q.iter() {
            assert_relative_eq!(*v, 1.0);
        }
        // θ^T f = 2 ln 3 gives q = 3.
        let f = DMatrix::from_column_slice(1, 1, &[2.0 * 3.0f64.ln()]);
        let phi = DMatrix::from_column_slice(1, 1, &[1.0]);
        let inst =
            ConditionalInstance::new(f, phi, SubsetSelection::new(vec![0], 1).unwrap()).unwrap();
        let theta = DVector::from_vec(vec![1.0]);
        assert_relative_eq!(quality_scores(&theta, &inst)[0], 3.0, epsilon = 1e-12);
        // Scaling features scales log q linearly.
        let q1 = quality_scores(&theta, &inst)[0].ln();
        let f2 = inst.quality_features() * 2.0;
        let inst2 = ConditionalInstance::new(
            f2,
            inst.diversity().clone(),
            inst.label().clone(),
        )
        .unwrap();
        let q2 = quality_scores(&theta, &inst2)[0].ln();
        assert_relative_eq!(q2, 2.0 * q1, epsilon = 1e-12);
    }

    #[test]
    fn log_likelihood_values() {
        // Single item, L = [1], Y = {0}: P = 1/2.
        let f = DMatrix::zeros(2, 1);
        let phi = DMatrix::from_column_slice(1, 1, &[1.0]);
        let inst =
            ConditionalInstance::new(f, phi, SubsetSelection::new(vec![0], 1).unwrap()).unwrap();
        let theta = DVector::zeros(2);
        assert_relative_eq!(log_likelihood(&theta, &[inst]), 0.5f64.ln(), epsilon = 1e-12);

        // Against the enumeration oracle.
        let inst = random_instance(121, 6, 4, vec![1, 3]);
        let theta = DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1]);
        let l = inst.kernel(&theta);
        let table = enumerate_dpp(&l, &EnumerationBudget::default()).unwrap();
        let want = (crate::linalg::principal_minor_det(l.matrix(), &[1, 3])
            / table.normalizer())
        .ln();
        assert_relative_eq!(log_likelihood(&theta, &[inst]), want, max_relative = 1e-9);
    }

    #[test]
    fn gradient_zero_at_saturated_fixture() {
        // Two one-item instances labeled {0} and {}: at θ = 0 the model
        // marginal is 1/2, exactly the empirical rate, so the gradient
        // vanishes.
        let f = DMatrix::from_column_slice(1, 1, &[1.0]);
        let phi = DMatrix::from_column_slice(1, 1, &[1.0]);
        let with = ConditionalInstance::new(
            f.clone(),
            phi.clone(),
            SubsetSelection::new(vec![0], 1).unwrap(),
        )
        .unwrap();
        let without =
            ConditionalInstance::new(f, phi, SubsetSelection::empty()).unwrap();
        let g = gradient(&DVector::zeros(1), &[with, without]);
        assert_relative_eq!(g[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = vec![
            random_instance(122, 6, 4, vec![0, 2]),
            random_instance(123, 6, 4, vec![1, 4, 5]),
        ];
        let mut rng = ChaCha12Rng::seed_from_u64(124);
        for _ in 0..5 {
            let theta = DVector::from_fn(4, |_, _| rng.random_range(-0.8..0.8));
            let g = gradient(&theta, &data);
            let h = 1e-5;
            for j in 0..4 {
                let mut tp = theta.clone();
                tp[j] += h;
                let mut tm = theta.clone();
                tm[j] -= h;
                let fd = (log_likelihood(&tp, &data) - log_likelihood(&tm, &data)) / (2.0 * h);
                assert!(
                    (g[j] - fd).abs() <= 1e-6 * g[j].abs().max(1.0),
                    "component {j}: {} vs {}",
                    g[j],
                    fd
                );
            }
        }
    }

    #[test]
    fn nondiverse_examples_push_harder_than_logistic_regression() {
        // Two near-parallel items both labeled: the DPP's expected counts
        // are depressed by the determinant, so its gradient along the
        // shared feature exceeds the logistic-regression gradient
        // (empirical minus independent-model marginals).
        let f = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let phi = {
            let mut p = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.9995, 0.0316]);
            for i in 0..2 {
                let n = p.column(i).norm();
                let mut c = p.column_mut(i);
                c /= n;
            }
            p
        };
        let inst = ConditionalInstance::new(
            f.clone(),
            phi,
            SubsetSelection::new(vec![0, 1], 2).unwrap(),
        )
        .unwrap();
        let theta = DVector::zeros(1);
        let dpp_grad = gradient(&theta, &[inst])[0];
        // Logistic regression on the same data: each item labeled 1,
        // gradient per item = (1 - σ(θ^T f)) f = 1/2 each at θ = 0.
        let lr_grad = 2.0 * (1.0 - 0.5);
        assert!(
            dpp_grad > lr_grad,
            "dpp gradient {dpp_grad} should exceed logistic {lr_grad}"
        );
    }

    #[test]
    fn concavity_along_random_lines() {
        let data = vec![
            random_instance(125, 5, 3, vec![0, 3]),
            random_instance(126, 5, 3, vec![2]),
        ];
        let mut rng = ChaCha12Rng::seed_from_u64(127);
        for _ in 0..20 {
            let theta = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let dir = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let h = 0.05;
            let plus = log_likelihood(&(&theta + &dir * h), &data);
            let minus = log_likelihood(&(&theta - &dir * h), &data);
            let mid = log_likelihood(&theta, &data);
            assert!(plus + minus - 2.0 * mid <= 1e-8);
        }
    }

    #[test]
    fn equal_cardinality_likelihood_ratios_survive_feature_shift() {
        // Adding a constant vector to every f_i rescales all quality scores
        // by one factor, which cancels in likelihood ratios of
        // equal-cardinality sets (and in cardinality-conditioned
        // probabilities).
        let inst = random_instance(128, 5, 3, vec![0, 1]);
        let theta = DVector::from_vec(vec![0.4, -0.7, 0.2]);
        let shift = DVector::from_vec(vec![0.9, 0.5, -1.1]);
        let mut shifted_f = inst.quality_features().clone();
        for i in 0..shifted_f.ncols() {
            let mut col = shifted_f.column_mut(i);
            col += &shift;
        }
        let shifted = ConditionalInstance::new(
            shifted_f,
            inst.diversity().clone(),
            inst.label().clone(),
        )
        .unwrap();
        let l_a = inst.kernel(&theta);
        let l_b = shifted.kernel(&theta);
        let det = |l: &LEnsemble, items: &[usize]| {
            crate::linalg::principal_minor_det(l.matrix(), items)
        };
        for (y1, y2) in [(vec![0, 1], vec![2, 3]), (vec![1, 4], vec![0, 3])] {
            let ratio_a = det(&l_a, &y1) / det(&l_a, &y2);
            let ratio_b = det(&l_b, &y1) / det(&l_b, &y2);
            assert_relative_eq!(ratio_a, ratio_b, max_relative = 1e-9);
        }
    }

    #[test]
    fn training_recovers_planted_parameters() {
        let mut rng = ChaCha12Rng::seed_from_u64(129);
        let theta_star = DVector::from_vec(vec![0.8, -0.6, 0.4]);
        let (n, m) = (8usize, 3usize);
        let mut data = Vec::new();
        for _ in 0..200 {
            let f = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let phi = unit_columns(&mut rng, n, n);
            let probe = ConditionalInstance::new(
                f.clone(),
                phi.clone(),
                SubsetSelection::empty(),
            )
            .unwrap();
            let l = probe.kernel(&theta_star);
            let y = sample(&l.eigen(), &mut rng);
            data.push(ConditionalInstance::new(f, phi, y).unwrap());
        }
        let report = train_quality(
            &data,
            DVector::zeros(m),
            &TrainConfig { tol: 1e-5, max_iters: 300, l2: 0.0 },
        )
        .unwrap();
        let err = (&report.theta - &theta_star).norm();
        assert!(err <= 0.2, "recovered {:?}, error {err}", report.theta);
    }

    #[test]
    fn training_stops_immediately_at_optimum() {
        // The saturated two-instance fixture has its optimum at θ = 0.
        let f = DMatrix::from_column_slice(1, 1, &[1.0]);
        let phi = DMatrix::from_column_slice(1, 1, &[1.0]);
        let with = ConditionalInstance::new(
            f.clone(),
            phi.clone(),
            SubsetSelection::new(vec![0], 1).unwrap(),
        )
        .unwrap();
        let without = ConditionalInstance::new(f, phi, SubsetSelection::empty()).unwrap();
        let report =
            train_quality(&[with, without], DVector::zeros(1), &TrainConfig::default()).unwrap();
        assert!(report.iterations <= 2, "took {} iterations", report.iterations);
    }

    #[test]
    fn degenerate_instances_are_dropped() {
        // Duplicate diversity features make det(S_Y) = 0 for the pair.
        let f = DMatrix::zeros(1, 2);
        let phi = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let broken = ConditionalInstance::new(
            f.clone(),
            phi.clone(),
            SubsetSelection::new(vec![0, 1], 2).unwrap(),
        )
        .unwrap();
        let fine =
            ConditionalInstance::new(f, phi, SubsetSelection::new(vec![0], 2).unwrap()).unwrap();
        assert_eq!(log_likelihood(&DVector::zeros(1), &[broken.clone()]), f64::NEG_INFINITY);
        let report =
            train_quality(&[broken, fine], DVector::zeros(1), &TrainConfig::default()).unwrap();
        assert_eq!(report.dropped, 1);
    }

    fn random_experts(seed: u64, d: usize, n: usize) -> Vec<LEnsemble> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..d)
            .map(|_| {
                let phi = unit_columns(&mut rng, n, n);
                let q = DVector::from_fn(n, |_, _| rng.random_range(0.3..1.7));
                crate::kernel::gram_from_features(q, phi).unwrap()
            })
            .collect()
    }

    fn random_pairs(
        seed: u64,
        n: usize,
        k: usize,
        count: usize,
    ) -> Vec<(SubsetSelection, SubsetSelection)> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let mut draw = || {
                    let mut items: Vec<usize> = (0..n).collect();
                    for i in (1..items.len()).rev() {
                        let j = rng.random_range(0..=i);
                        items.swap(i, j);
                    }
                    SubsetSelection::new(items[..k].to_vec(), n).unwrap()
                };
                (draw(), draw())
            })
            .collect()
    }

    #[test]
    fn mixture_loss_and_gradient() {
        let experts = random_experts(130, 5, 6);
        let pairs = random_pairs(131, 6, 2, 8);
        let deltas = mixture_deltas(&experts, &pairs, 2, 4.0).unwrap();

        // Finite differences.
        let mut rng = ChaCha12Rng::seed_from_u64(132);
        for _ in 0..5 {
            let theta = DVector::from_fn(5, |_, _| rng.random_range(0.0..1.0));
            let (_, g) = mixture_objective_grad(&theta, &deltas);
            let h = 1e-6;
            for j in 0..5 {
                let mut tp = theta.clone();
                tp[j] += h;
                let mut tm = theta.clone();
                tm[j] -= h;
                let (lp, _) = mixture_objective_grad(&tp, &deltas);
                let (lm, _) = mixture_objective_grad(&tm, &deltas);
                let fd = (lp - lm) / (2.0 * h);
                assert!((g[j] - fd).abs() <= 1e-6 * g[j].abs().max(1.0));
            }
        }

        // γ = 0: loss = T log 2, gradient 0.
        let zero_deltas = mixture_deltas(&experts, &pairs, 2, 0.0).unwrap();
        let (loss, grad) = mixture_objective_grad(&MixtureParams::uniform(5).theta, &zero_deltas);
        assert_relative_eq!(loss, 8.0 * 2.0f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(grad.norm(), 0.0, epsilon = 1e-12);

        // D = 1: θ is pinned to [1] on the simplex; loss is constant in θ.
        let one_expert = random_experts(133, 1, 6);
        let d1 = mixture_deltas(&one_expert, &pairs, 2, 4.0).unwrap();
        let report = train_mixture(&d1, 1, 50, 1e-10).unwrap();
        assert_relative_eq!(report.params.theta[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mixture_convexity_and_descent() {
        let experts = random_experts(134, 4, 6);
        let pairs = random_pairs(135, 6, 2, 10);
        let deltas = mixture_deltas(&experts, &pairs, 2, 6.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(136);
        // Convexity along random segments inside the simplex.
        for _ in 0..20 {
            let a = project_simplex(&DVector::from_fn(4, |_, _| rng.random_range(0.0..1.0)));
            let b = project_simplex(&DVector::from_fn(4, |_, _| rng.random_range(0.0..1.0)));
            let mid = (&a + &b) * 0.5;
            let (la, _) = mixture_objective_grad(&a, &deltas);
            let (lb, _) = mixture_objective_grad(&b, &deltas);
            let (lm, _) = mixture_objective_grad(&mid, &deltas);
            assert!(la + lb - 2.0 * lm >= -1e-8);
        }
        // Projected gradient descent monotonically decreases the loss.
        let report = train_mixture(&deltas, 4, 100, 1e-9).unwrap();
        let (uniform_loss, _) = mixture_objective_grad(&MixtureParams::uniform(4).theta, &deltas);
        assert!(report.loss <= uniform_loss + 1e-12);
        assert_relative_eq!(report.params.theta.sum(), 1.0, epsilon = 1e-10);
        assert!(report.params.theta.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn simplex_projection_cases() {
        // Already on the simplex: unchanged.
        let v = DVector::from_vec(vec![0.2, 0.5, 0.3]);
        assert_relative_eq!(project_simplex(&v), v, epsilon = 1e-12);
        // Clamping case.
        let v = DVector::from_vec(vec![2.0, 0.0]);
        assert_relative_eq!(
            project_simplex(&v),
            DVector::from_vec(vec![1.0, 0.0]),
            epsilon = 1e-12
        );
    }

    #[test]
    fn simplex_projection_matches_kkt_scan() {
        // Brute-force oracle: for every support set, solve the equality-
        // constrained projection and keep the feasible KKT point.
        fn oracle(v: &DVector<f64>) -> DVector<f64> {
            let d = v.len();
            let mut best: Option<(f64, DVector<f64>)> = None;
            for mask in 1u64..(1 << d) {
                let support: Vec<usize> = (0..d).filter(|i| mask >> i & 1 == 1).collect();
                let s: f64 = support.iter().map(|&i| v[i]).sum();
                let tau = (s - 1.0) / support.len() as f64;
                let mut x = DVector::zeros(d);
                let mut feasible = true;
                for &i in &support {
                    x[i] = v[i] - tau;
                    if x[i] < -1e-12 {
                        feasible = false;
                    }
                }
                for i in 0..d {
                    // KKT: off-support components must not want in.
                    if !support.contains(&i) && v[i] - tau > 1e-12 {
                        feasible = false;
                    }
                }
                if feasible {
                    let dist = (&x - v).norm_squared();
                    if best.as_ref().map_or(true, |(b, _)| dist < *b) {
                        best = Some((dist, x));
                    }
                }
            }
            best.unwrap().1
        }
        let mut rng = ChaCha12Rng::seed_from_u64(137);
        for _ in 0..25 {
            let v = DVector::from_fn(6, |_, _| rng.random_range(-2.0..2.0));
            let got = project_simplex(&v);
            let want = oracle(&v);
            assert_relative_eq!(got, want, epsilon = 1e-8);
        }
    }
}
