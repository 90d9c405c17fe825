//! Structured DPPs over factor trees.
//!
//! The ground set is the exponential space of structures (assignments of
//! `M` labels to `R` parts). Quality factors multiplicatively and diversity
//! features factor additively over a factor tree, so the dual kernel
//! `C = Σ_y q^2(y) φ(y) φ(y)^T`, part marginals, and exact sampling are all
//! computable by second-order belief propagation without ever enumerating
//! the ground set.

pub mod bp;
pub mod demos;
pub mod factor_tree;
pub mod semiring;

pub use factor_tree::{FactorTables, FactorTree, Structure};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dual::{self, DualEigenbasis};
use crate::error::{DppError, Result};
use bp::{belief, euler_tour, run_bp, run_bp_forward, update_message, Messages};
use semiring::{
    BatchQuadratic, BatchQuadraticSemiring, ScalarSecondOrder, SecondOrder,
    VectorizedSemiring,
};

/// A structured DPP model: a factor tree plus its quality/diversity tables.
#[derive(Debug, Clone)]
pub struct SdppModel {
    pub tree: FactorTree,
    pub tables: FactorTables,
}

impl SdppModel {
    pub fn new(tree: FactorTree, tables: FactorTables) -> Self {
        SdppModel { tree, tables }
    }

    /// Feature dimension `D`.
    pub fn dim(&self) -> usize {
        self.tables.dim()
    }

    /// The column `B_y = q(y) φ(y)` of the implicit D×N feature matrix.
    pub fn b_column(&self, y: &Structure) -> DVector<f64> {
        self.tables.features(&self.tree, y) * self.tables.quality(&self.tree, y)
    }

    /// Computes `C = Σ_y q^2(y) φ(y) φ(y)^T` with a single forward pass of
    /// the vectorized second-order semiring. Also returns the total quality
    /// mass `Σ_y q^2(y)`.
    pub fn dual_c(&self) -> (DMatrix<f64>, f64) {
        let d = self.dim();
        let sem = VectorizedSemiring { dim: d };
        let weights: Vec<Vec<_>> = (0..self.tree.n_factors())
            .map(|f| {
                (0..self.tree.factor_rows(f))
                    .map(|idx| {
                        let p = self.tables.q_row(f, idx);
                        sem.weight(p * p, self.tables.phi_row(f, idx))
                    })
                    .collect()
            })
            .collect();
        let root = 0usize;
        let assignments = vec![None; self.tree.n_parts()];
        let msgs = run_bp_forward(&sem, &self.tree, &weights, &assignments, root);
        let beliefs = belief(&sem, &self.tree, &msgs, root);
        let mut c = DMatrix::zeros(d, d);
        let mut mass = 0.0;
        for b in beliefs {
            c += b.c;
            mass += b.q;
        }
        // The accumulation is symmetric up to rounding.
        let c = (&c + c.transpose()) * 0.5;
        (c, mass)
    }

    /// Reference path for `dual_c`: one scalar second-order pass per entry
    /// of `C`. Quadratic in `D`; used for differential testing.
    pub fn dual_c_scalar(&self) -> DMatrix<f64> {
        let d = self.dim();
        let sem = SecondOrder;
        let root = 0usize;
        let assignments = vec![None; self.tree.n_parts()];
        let mut c = DMatrix::zeros(d, d);
        for a in 0..d {
            for b_idx in a..d {
                let weights: Vec<Vec<ScalarSecondOrder>> = (0..self.tree.n_factors())
                    .map(|f| {
                        (0..self.tree.factor_rows(f))
                            .map(|idx| {
                                let p = self.tables.q_row(f, idx);
                                let phi = self.tables.phi_row(f, idx);
                                ScalarSecondOrder::weight(p * p, phi[a], phi[b_idx])
                            })
                            .collect()
                    })
                    .collect();
                let msgs = run_bp_forward(&sem, &self.tree, &weights, &assignments, root);
                let value: f64 = belief(&sem, &self.tree, &msgs, root)
                    .into_iter()
                    .map(|e| e.c)
                    .sum();
                c[(a, b_idx)] = value;
                c[(b_idx, a)] = value;
            }
        }
        c
    }

    /// Eigendecomposition of the dual kernel.
    pub fn dual_eigen(&self) -> Result<DualEigenbasis> {
        let (c, _) = self.dual_c();
        DualEigenbasis::of_matrix(&c)
    }

    fn batch_weights(&self, vhat: &[DVector<f64>]) -> (BatchQuadraticSemiring, Vec<Vec<BatchQuadratic>>) {
        let sem = BatchQuadraticSemiring { batch: vhat.len() };
        let weights = (0..self.tree.n_factors())
            .map(|f| {
                (0..self.tree.factor_rows(f))
                    .map(|idx| {
                        let p = self.tables.q_row(f, idx);
                        let phi = self.tables.phi_row(f, idx);
                        let dots = DVector::from_iterator(
                            vhat.len(),
                            vhat.iter().map(|v| v.dot(phi)),
                        );
                        sem.weight(p * p, &dots)
                    })
                    .collect()
            })
            .collect();
        (sem, weights)
    }
}

/// Expected number of sampled structures assigning each label to each part:
/// `μ_r(ŷ) = Σ_n (λ_n+1)^{-1} Σ_{y ~ ŷ} q^2(y) (φ(y)^T ĉv_n)^2`, as an
/// R×M matrix. One batched two-pass BP run serves every part.
pub fn part_marginals(model: &SdppModel, eigen: &DualEigenbasis) -> DMatrix<f64> {
    let d = model.dim();
    let vhat: Vec<DVector<f64>> =
        (0..d).map(|n| eigen.eigenvectors().column(n).clone_owned()).collect();
    let (sem, weights) = model.batch_weights(&vhat);
    let assignments = vec![None; model.tree.n_parts()];
    let msgs = run_bp(&sem, &model.tree, &weights, &assignments, 0);
    let r_count = model.tree.n_parts();
    let m_count = model.tree.n_labels();
    let mut mu = DMatrix::zeros(r_count, m_count);
    for r in 0..r_count {
        let beliefs = belief(&sem, &model.tree, &msgs, r);
        for (label, b) in beliefs.iter().enumerate() {
            let mut acc = 0.0;
            for n in 0..d {
                acc += b.c[n].max(0.0) / (eigen.eigenvalues()[n] + 1.0);
            }
            mu[(r, label)] = acc;
        }
    }
    mu
}

fn draw_from_masses<R: Rng + ?Sized>(masses: &[f64], rng: &mut R) -> Result<usize> {
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(DppError::DegenerateModel(
            "assignment distribution has zero total mass".into(),
        ));
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &m) in masses.iter().enumerate() {
        acc += m;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(masses.len() - 1)
}

fn sample_structure_impl<R, H>(
    model: &SdppModel,
    vhat: &[DVector<f64>],
    rng: &mut R,
    mut hook: H,
) -> Result<Structure>
where
    R: Rng + ?Sized,
    H: FnMut(&BatchQuadraticSemiring, &[Vec<BatchQuadratic>], &Messages<BatchQuadratic>, &[Option<usize>], usize),
{
    let (sem, weights) = model.batch_weights(vhat);
    let r_count = model.tree.n_parts();
    let mut assignments: Vec<Option<usize>> = vec![None; r_count];
    let root = 0usize;
    let mut msgs = run_bp(&sem, &model.tree, &weights, &assignments, root);
    let tour = euler_tour(&model.tree, root);
    for t in 0..tour.len() {
        let node = tour[t];
        if node < r_count && assignments[node].is_none() {
            let beliefs = belief(&sem, &model.tree, &msgs, node);
            let masses: Vec<f64> =
                beliefs.iter().map(|b| b.c.iter().map(|v| v.max(0.0)).sum()).collect();
            assignments[node] = Some(draw_from_masses(&masses, rng)?);
        }
        if t + 1 < tour.len() {
            update_message(&sem, &model.tree, &weights, &mut msgs, &assignments, node, tour[t + 1]);
            hook(&sem, &weights, &msgs, &assignments, tour[t + 1]);
        }
    }
    let labels: Vec<usize> = assignments.into_iter().map(|a| a.expect("tour covers all parts")).collect();
    Structure::new(labels, model.tree.n_labels())
}

/// Samples one structure with probability proportional to
/// `q^2(y) Σ_v (ĉv^T φ(y))^2` (one initialization pass plus one message per
/// tree-walk step).
pub fn sample_structure<R: Rng + ?Sized>(
    model: &SdppModel,
    vhat: &[DVector<f64>],
    rng: &mut R,
) -> Result<Structure> {
    sample_structure_impl(model, vhat, rng, |_, _, _, _, _| {})
}

/// Test hook: like [`sample_structure`] but invokes the callback after
/// every message update so the walk invariant can be verified against a
/// from-scratch recomputation.
#[doc(hidden)]
pub fn sample_structure_checked<R, H>(
    model: &SdppModel,
    vhat: &[DVector<f64>],
    rng: &mut R,
    hook: H,
) -> Result<Structure>
where
    R: Rng + ?Sized,
    H: FnMut(&BatchQuadraticSemiring, &[Vec<BatchQuadratic>], &Messages<BatchQuadratic>, &[Option<usize>], usize),
{
    sample_structure_impl(model, vhat, rng, hook)
}

/// Reference sampler: one full conditioned BP run per part. Distribution
/// identical to [`sample_structure`]; kept for differential testing.
pub fn sample_structure_naive<R: Rng + ?Sized>(
    model: &SdppModel,
    vhat: &[DVector<f64>],
    rng: &mut R,
) -> Result<Structure> {
    let (sem, weights) = model.batch_weights(vhat);
    let r_count = model.tree.n_parts();
    let mut assignments: Vec<Option<usize>> = vec![None; r_count];
    for r in 0..r_count {
        let msgs = run_bp(&sem, &model.tree, &weights, &assignments, r);
        let beliefs = belief(&sem, &model.tree, &msgs, r);
        let masses: Vec<f64> =
            beliefs.iter().map(|b| b.c.iter().map(|v| v.max(0.0)).sum()).collect();
        assignments[r] = Some(draw_from_masses(&masses, rng)?);
    }
    let labels: Vec<usize> = assignments.into_iter().map(Option::unwrap).collect();
    Structure::new(labels, model.tree.n_labels())
}

fn phase_two<R: Rng + ?Sized>(
    model: &SdppModel,
    c: &DMatrix<f64>,
    mut vhat: Vec<DVector<f64>>,
    rng: &mut R,
) -> Result<Vec<Structure>> {
    let mut out = Vec::with_capacity(vhat.len());
    while !vhat.is_empty() {
        let y = sample_structure(model, &vhat, rng)?;
        let b_y = model.b_column(&y);
        vhat = dual::eliminate_item(vhat, &b_y, c)?;
        out.push(y);
    }
    Ok(out)
}

/// Samples a set of structures from the SDPP (the dual sampling algorithm
/// with the item scan replaced by tree-walk structure sampling).
pub fn sdpp_sample<R: Rng + ?Sized>(
    model: &SdppModel,
    c: &DMatrix<f64>,
    eigen: &DualEigenbasis,
    rng: &mut R,
) -> Result<Vec<Structure>> {
    let mut j_set = Vec::new();
    for (n, &lambda) in eigen.eigenvalues().iter().enumerate() {
        if rng.random::<f64>() < lambda / (lambda + 1.0) {
            j_set.push(n);
        }
    }
    let vhat = dual::seed_vhat(eigen, &j_set);
    phase_two(model, c, vhat, rng)
}

/// Samples exactly `k` structures: the k-DPP eigenvector-selection phase
/// runs on the spectrum of `C`, then the SDPP sampler completes the draw.
pub fn ksdpp_sample<R: Rng + ?Sized>(
    model: &SdppModel,
    c: &DMatrix<f64>,
    eigen: &DualEigenbasis,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Structure>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let j_set = crate::kdpp::sample_k_eigenvectors(&eigen.eigenvalues().clone_owned(), k, rng)?;
    let vhat = dual::seed_vhat(eigen, &j_set);
    phase_two(model, c, vhat, rng)
}
