//! The `oracle-check` battery: closed-form implementations against
//! brute-force enumeration on seeded fixtures.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use dpp_core::dual::{dual_marginal_entry, dual_normalizer, DualRepresentation};
use dpp_core::inference::{
    complement_marginal, condition, marginal, normalizer, partial_marginal, set_probability,
    LikelihoodFormula,
};
use dpp_core::kdpp::{kdpp_normalizer, kdpp_singleton_marginals, EspLeaveOneOutTree, EspTable};
use dpp_core::kernel::{gram_from_features, l_to_k, LEnsemble, QualityDiversity};
use dpp_core::linalg::{principal_minor_det, principal_minor_log_det};
use dpp_core::oracle::{
    enumerate_dpp, enumerate_structures, naive_pairwise_c, EnumerationBudget,
};
use dpp_core::projections::l1_distance_exact;
use dpp_core::sdpp::{part_marginals, FactorTables, FactorTree, SdppModel};
use dpp_core::subset::{ConditionSpec, SubsetSelection};

pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn unit_columns(rng: &mut impl Rng, d: usize, n: usize) -> DMatrix<f64> {
    let mut phi = DMatrix::from_fn(d, n, |_, _| rng.random_range(-1.0..1.0));
    for i in 0..n {
        let norm = phi.column(i).norm();
        let mut col = phi.column_mut(i);
        col /= norm;
    }
    phi
}

fn fixture(seed: u64, n: usize, d: usize) -> (LEnsemble, QualityDiversity) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let phi = unit_columns(&mut rng, d, n);
    let q = DVector::from_fn(n, |_, _| rng.random_range(0.2..1.8));
    let qd = QualityDiversity::new(q, phi).unwrap();
    (LEnsemble::from_features(&qd), qd)
}

fn toy_sdpp(seed: u64, r: usize, m: usize, d: usize) -> SdppModel {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let tree = FactorTree::chain(r, m).unwrap();
    let mut q = Vec::new();
    let mut phi = Vec::new();
    for f in 0..tree.n_factors() {
        let rows = tree.factor_rows(f);
        let unary = tree.factor_parts(f).len() == 1;
        q.push((0..rows).map(|_| rng.random_range(0.2..1.5)).collect::<Vec<f64>>());
        phi.push(
            (0..rows)
                .map(|_| {
                    if unary {
                        let v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                        let norm = v.norm();
                        v / norm
                    } else {
                        DVector::zeros(d)
                    }
                })
                .collect::<Vec<_>>(),
        );
    }
    let tables = FactorTables::new(&tree, q, phi).unwrap();
    SdppModel::new(tree, tables)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn run_all() -> Vec<CheckResult> {
    let budget = EnumerationBudget::from_env();
    let mut out = Vec::new();

    {
        let (l, _) = fixture(1001, 9, 6);
        let table = enumerate_dpp(&l, &budget).unwrap();
        let err = rel_err(normalizer(&l.eigen()).linear, table.normalizer());
        out.push(CheckResult {
            name: "normalizer-closed-form",
            pass: err < 1e-10,
            detail: format!("rel err {err:.2e}"),
        });
    }

    {
        // Full feature rank keeps every minor bounded away from zero, so
        // the relative comparison is meaningful.
        let (l, _) = fixture(1002, 7, 7);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let y = SubsetSelection::from_mask(rng.random_range(0..(1 << 7)), 7);
            let a = set_probability(&l, &y, LikelihoodFormula::LRatio).linear;
            let b = set_probability(&l, &y, LikelihoodFormula::KMixed).linear;
            let c = set_probability(&l, &y, LikelihoodFormula::KSigned).linear;
            worst = worst.max((a - b).abs() / a);
            worst = worst.max((a - c).abs() / a);
        }
        out.push(CheckResult {
            name: "likelihood-formula-agreement",
            pass: worst < 1e-8,
            detail: format!("worst rel gap {worst:.2e}"),
        });
    }

    {
        let (l, _) = fixture(1003, 8, 6);
        let k = l_to_k(&l.eigen());
        let table = enumerate_dpp(&l, &budget).unwrap();
        let a = SubsetSelection::new(vec![1, 4, 6], 8).unwrap();
        let err_in = rel_err(marginal(&k, &a), table.marginal(&a));
        let err_out = (complement_marginal(&k, &a) - table.complement_marginal(&a)).abs();
        let spec = ConditionSpec::new(
            SubsetSelection::new(vec![0, 2], 8).unwrap(),
            SubsetSelection::new(vec![5], 8).unwrap(),
        )
        .unwrap();
        let err_mixed = rel_err(partial_marginal(&k, &spec).unwrap(), table.partial_marginal(&spec));
        let pass = err_in < 1e-9 && err_out < 1e-9 && err_mixed < 1e-8;
        out.push(CheckResult {
            name: "marginals",
            pass,
            detail: format!("in {err_in:.2e} out {err_out:.2e} mixed {err_mixed:.2e}"),
        });
    }

    {
        let (l, _) = fixture(1004, 6, 5);
        let table = enumerate_dpp(&l, &budget).unwrap();
        let spec = ConditionSpec::new(
            SubsetSelection::new(vec![0], 6).unwrap(),
            SubsetSelection::new(vec![3], 6).unwrap(),
        )
        .unwrap();
        let cond = condition(&l, &spec).unwrap();
        let oracle = table.conditional_table(&spec).unwrap();
        let log_norm = normalizer(&cond.model.eigen()).log;
        let mut worst: f64 = 0.0;
        for (mask, want) in oracle {
            let extra: Vec<usize> = (0..6)
                .filter(|i| mask >> i & 1 == 1 && !spec.include.contains(*i))
                .map(|i| cond.kept.binary_search(&i).unwrap())
                .collect();
            let got = match principal_minor_log_det(cond.model.matrix(), &extra) {
                Some(ld) => (ld - log_norm).exp(),
                None => 0.0,
            };
            worst = worst.max((got - want).abs() / want.max(1e-300));
        }
        out.push(CheckResult {
            name: "conditioning",
            pass: worst < 1e-8,
            detail: format!("worst rel err {worst:.2e}"),
        });
    }

    {
        let (l, _) = fixture(1005, 8, 6);
        let table = enumerate_dpp(&l, &budget).unwrap();
        let spec = l.eigen();
        let mut worst: f64 = 0.0;
        for k in 0..=8 {
            let z = kdpp_normalizer(spec.eigenvalues(), k).unwrap().linear;
            let brute = table.k_restricted_sum(k);
            if brute > 1e-12 * table.normalizer() {
                worst = worst.max(rel_err(z, brute));
            }
        }
        out.push(CheckResult {
            name: "kdpp-normalizer",
            pass: worst < 1e-10,
            detail: format!("worst rel err {worst:.2e}"),
        });
    }

    {
        let (l, _) = fixture(1006, 12, 9);
        let spec = l.eigen();
        let k = 4;
        let marg = kdpp_singleton_marginals(&spec, k).unwrap();
        let sum_err = (marg.sum() - k as f64).abs();
        // Tree-based leave-one-out against naive recomputation.
        let tree = EspLeaveOneOutTree::build(spec.eigenvalues(), k).unwrap();
        let mut worst: f64 = 0.0;
        for n in 0..12 {
            let reduced: Vec<f64> = (0..12)
                .filter(|&m| m != n)
                .map(|m| spec.eigenvalues()[m])
                .collect();
            let naive = EspTable::compute(&DVector::from_vec(reduced), k - 1)
                .unwrap()
                .log_e(k - 1, 11);
            let fast = tree.log_leave_one_out(n, k - 1);
            worst = worst.max((fast - naive).abs());
        }
        out.push(CheckResult {
            name: "kdpp-singleton-marginals",
            pass: sum_err < 1e-9 && worst < 1e-10,
            detail: format!("sum err {sum_err:.2e}, worst log gap {worst:.2e}"),
        });
    }

    {
        let (l, qd) = fixture(1007, 8, 3);
        let rep = DualRepresentation::build(&qd);
        let eigen = rep.eigen().unwrap();
        let err_norm =
            rel_err(dual_normalizer(&eigen).linear, normalizer(&l.eigen()).linear);
        let k = l_to_k(&l.eigen());
        let mut worst: f64 = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                worst = worst
                    .max((dual_marginal_entry(&rep, &eigen, i, j) - k.matrix()[(i, j)]).abs());
            }
        }
        out.push(CheckResult {
            name: "dual-equivalence",
            pass: err_norm < 1e-10 && worst < 1e-9,
            detail: format!("normalizer rel {err_norm:.2e}, kernel entry {worst:.2e}"),
        });
    }

    {
        let model = toy_sdpp(1008, 3, 3, 4);
        let table = enumerate_structures(&model.tree, &model.tables, &budget).unwrap();
        let (c, _) = model.dual_c();
        let c_ref = table.c_matrix();
        let err_enum = (&c - &c_ref).norm() / c_ref.norm();
        let naive = naive_pairwise_c(&model);
        let err_naive = (&c - &naive).norm() / naive.norm();
        out.push(CheckResult {
            name: "sdpp-dual-c",
            pass: err_enum < 1e-10 && err_naive < 1e-9,
            detail: format!("enum {err_enum:.2e}, pairwise {err_naive:.2e}"),
        });
    }

    {
        let model = toy_sdpp(1009, 3, 3, 4);
        let table = enumerate_structures(&model.tree, &model.tables, &budget).unwrap();
        let eigen = model.dual_eigen().unwrap();
        let mu = part_marginals(&model, &eigen);
        let l = table.l_ensemble();
        let k = l_to_k(&l.eigen());
        let mut worst: f64 = 0.0;
        for r in 0..3 {
            for label in 0..3 {
                let brute: f64 = (0..table.n_structures())
                    .filter(|&i| table.structures[i].labels()[r] == label)
                    .map(|i| k.matrix()[(i, i)])
                    .sum();
                worst = worst.max((mu[(r, label)] - brute).abs() / brute.max(1e-300));
            }
        }
        out.push(CheckResult {
            name: "sdpp-part-marginals",
            pass: worst < 1e-8,
            detail: format!("worst rel err {worst:.2e}"),
        });
    }

    {
        // Identity projection leaves the cardinality-conditioned law
        // untouched.
        let mut rng = ChaCha12Rng::seed_from_u64(1010);
        let phi = unit_columns(&mut rng, 6, 9);
        let q = DVector::from_fn(9, |_, _| rng.random_range(0.3..1.5));
        let l = gram_from_features(q.clone(), phi.clone()).unwrap();
        let mut b = phi;
        for i in 0..9 {
            let mut col = b.column_mut(i);
            col *= q[i];
        }
        let l1 = l1_distance_exact(&b, &b, 3, budget.max_subsets).unwrap();
        // Cross-check one subset weight against the kernel minor.
        let det_gram = {
            let cols = b.select_columns([1usize, 4, 7].iter());
            (cols.transpose() * cols).determinant()
        };
        let det_minor = principal_minor_det(l.matrix(), &[1, 4, 7]);
        let gap = rel_err(det_gram, det_minor);
        out.push(CheckResult {
            name: "projection-identity",
            pass: l1 < 1e-10 && gap < 1e-9,
            detail: format!("identity L1 {l1:.2e}, minor gap {gap:.2e}"),
        });
    }

    out
}
