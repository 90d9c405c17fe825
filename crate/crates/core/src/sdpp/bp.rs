//! Generic belief propagation over a factor tree, parameterized by a
//! semiring.
//!
//! Node ids: variables are `0..R`, factor `f` is node `R + f`. After one
//! forward and one backward pass, the product of incoming factor messages
//! at any variable equals the semiring sum over all consistent structures
//! of the product of factor weights. Message updates write into the stored
//! buffers; element operations run in place because the inner loops execute
//! millions of times at demo scale.

use super::factor_tree::FactorTree;
use super::semiring::Semiring;

/// All messages of a factor tree: `var_to_fac[f][slot][label]` and
/// `fac_to_var[f][slot][label]`, where `slot` indexes the factor's parts.
#[derive(Debug, Clone)]
pub struct Messages<E> {
    pub var_to_fac: Vec<Vec<Vec<E>>>,
    pub fac_to_var: Vec<Vec<Vec<E>>>,
}

impl<E> Messages<E> {
    fn fresh<S: Semiring<Elem = E>>(sem: &S, tree: &FactorTree) -> Self {
        let m = tree.n_labels();
        Messages {
            var_to_fac: (0..tree.n_factors())
                .map(|f| {
                    (0..tree.factor_parts(f).len())
                        .map(|_| (0..m).map(|_| sem.one()).collect())
                        .collect()
                })
                .collect(),
            fac_to_var: (0..tree.n_factors())
                .map(|f| {
                    (0..tree.factor_parts(f).len())
                        .map(|_| (0..m).map(|_| sem.one()).collect())
                        .collect()
                })
                .collect(),
        }
    }
}

fn slot_of(tree: &FactorTree, f: usize, r: usize) -> usize {
    tree.factor_parts(f)
        .iter()
        .position(|&p| p == r)
        .expect("part belongs to factor")
}

/// Message from variable `r` toward factor `f_target`: the product of all
/// other incoming factor messages. A fixed assignment zeroes every label
/// but the assigned one. Writes into `out`.
fn var_to_fac_into<S: Semiring>(
    sem: &S,
    tree: &FactorTree,
    msgs: &Messages<S::Elem>,
    assignments: &[Option<usize>],
    r: usize,
    f_target: usize,
    out: &mut [S::Elem],
) {
    let one = sem.one();
    for o in out.iter_mut() {
        sem.assign(o, &one);
    }
    for &f in tree.part_factors(r) {
        if f == f_target {
            continue;
        }
        let slot = slot_of(tree, f, r);
        let incoming = &msgs.fac_to_var[f][slot];
        for (label, o) in out.iter_mut().enumerate() {
            sem.mul_assign(o, &incoming[label]);
        }
    }
    if let Some(fixed) = assignments[r] {
        let zero = sem.zero();
        for (label, o) in out.iter_mut().enumerate() {
            if label != fixed {
                sem.assign(o, &zero);
            }
        }
    }
}

/// Message from factor `f` toward the part in `slot`: the semiring sum over
/// the factor's assignment rows, each multiplied by the other parts'
/// incoming messages. Writes into `out`.
fn fac_to_var_into<S: Semiring>(
    sem: &S,
    tree: &FactorTree,
    weights: &[Vec<S::Elem>],
    msgs: &Messages<S::Elem>,
    f: usize,
    slot: usize,
    out: &mut [S::Elem],
) {
    let zero = sem.zero();
    for o in out.iter_mut() {
        sem.assign(o, &zero);
    }
    let m = tree.n_labels();
    let degree = tree.factor_parts(f).len();
    let mut term = sem.one();
    match degree {
        1 => {
            for label in 0..m {
                sem.add_assign(&mut out[label], &weights[f][label]);
            }
        }
        2 => {
            // Row index is l0 * M + l1; this loop runs millions of times,
            // so it avoids the generic label decoding.
            let other = 1 - slot;
            let incoming = &msgs.var_to_fac[f][other];
            for l0 in 0..m {
                for l1 in 0..m {
                    let idx = l0 * m + l1;
                    sem.assign(&mut term, &weights[f][idx]);
                    let (target, other_label) = if slot == 0 { (l0, l1) } else { (l1, l0) };
                    sem.mul_assign(&mut term, &incoming[other_label]);
                    sem.add_assign(&mut out[target], &term);
                }
            }
        }
        _ => {
            for idx in 0..tree.factor_rows(f) {
                let labels = tree.assignment_labels(f, idx);
                sem.assign(&mut term, &weights[f][idx]);
                for (s, &label) in labels.iter().enumerate() {
                    if s == slot {
                        continue;
                    }
                    sem.mul_assign(&mut term, &msgs.var_to_fac[f][s][label]);
                }
                sem.add_assign(&mut out[labels[slot]], &term);
            }
        }
    }
}

fn neighbors(tree: &FactorTree, node: usize) -> Vec<usize> {
    if node < tree.n_parts() {
        tree.part_factors(node).iter().map(|&f| tree.n_parts() + f).collect()
    } else {
        tree.factor_parts(node - tree.n_parts()).to_vec()
    }
}

/// BFS order and parents from `root` over the bipartite tree.
fn bfs(tree: &FactorTree, root: usize) -> (Vec<usize>, Vec<Option<usize>>) {
    let n_nodes = tree.n_parts() + tree.n_factors();
    let mut order = Vec::with_capacity(n_nodes);
    let mut parent = vec![None; n_nodes];
    let mut seen = vec![false; n_nodes];
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(root);
    seen[root] = true;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for v in neighbors(tree, u) {
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some(u);
                queue.push_back(v);
            }
        }
    }
    (order, parent)
}

/// Recomputes the single message `from -> to` from the current state.
pub fn update_message<S: Semiring>(
    sem: &S,
    tree: &FactorTree,
    weights: &[Vec<S::Elem>],
    msgs: &mut Messages<S::Elem>,
    assignments: &[Option<usize>],
    from: usize,
    to: usize,
) {
    let r_count = tree.n_parts();
    if from < r_count {
        let f = to - r_count;
        let slot = slot_of(tree, f, from);
        // Take the target buffer out so the remaining messages stay
        // readable; a variable's outgoing message never reads itself.
        let mut out = std::mem::take(&mut msgs.var_to_fac[f][slot]);
        var_to_fac_into(sem, tree, msgs, assignments, from, f, &mut out);
        msgs.var_to_fac[f][slot] = out;
    } else {
        let f = from - r_count;
        let slot = slot_of(tree, f, to);
        let mut out = std::mem::take(&mut msgs.fac_to_var[f][slot]);
        fac_to_var_into(sem, tree, weights, msgs, f, slot, &mut out);
        msgs.fac_to_var[f][slot] = out;
    }
}

/// Forward pass only: messages toward `root` are valid afterwards, which is
/// all that a belief query at the root needs.
pub fn run_bp_forward<S: Semiring>(
    sem: &S,
    tree: &FactorTree,
    weights: &[Vec<S::Elem>],
    assignments: &[Option<usize>],
    root: usize,
) -> Messages<S::Elem> {
    let mut msgs = Messages::fresh(sem, tree);
    let (order, parent) = bfs(tree, root);
    for &u in order.iter().rev() {
        if let Some(p) = parent[u] {
            update_message(sem, tree, weights, &mut msgs, assignments, u, p);
        }
    }
    msgs
}

/// Full two-pass belief propagation with the given fixed assignments.
pub fn run_bp<S: Semiring>(
    sem: &S,
    tree: &FactorTree,
    weights: &[Vec<S::Elem>],
    assignments: &[Option<usize>],
    root: usize,
) -> Messages<S::Elem> {
    let mut msgs = Messages::fresh(sem, tree);
    let (order, parent) = bfs(tree, root);
    // Forward: leaves to root.
    for &u in order.iter().rev() {
        if let Some(p) = parent[u] {
            update_message(sem, tree, weights, &mut msgs, assignments, u, p);
        }
    }
    // Backward: root to leaves.
    for &u in order.iter() {
        for v in neighbors(tree, u) {
            if parent[u] != Some(v) {
                update_message(sem, tree, weights, &mut msgs, assignments, u, v);
            }
        }
    }
    msgs
}

/// Belief at variable `r`: the product of all incoming factor messages,
/// per label.
pub fn belief<S: Semiring>(
    sem: &S,
    tree: &FactorTree,
    msgs: &Messages<S::Elem>,
    r: usize,
) -> Vec<S::Elem> {
    let m = tree.n_labels();
    let mut out = vec![sem.one(); m];
    for &f in tree.part_factors(r) {
        let slot = slot_of(tree, f, r);
        for (label, o) in out.iter_mut().enumerate() {
            sem.mul_assign(o, &msgs.fac_to_var[f][slot][label]);
        }
    }
    out
}

/// Depth-first Euler tour from `root`: visits every node, traversing each
/// edge once in each direction; consecutive entries are adjacent.
pub fn euler_tour(tree: &FactorTree, root: usize) -> Vec<usize> {
    let n_nodes = tree.n_parts() + tree.n_factors();
    let mut tour = Vec::with_capacity(2 * n_nodes);
    let mut seen = vec![false; n_nodes];
    fn visit(tree: &FactorTree, u: usize, seen: &mut [bool], tour: &mut Vec<usize>) {
        seen[u] = true;
        tour.push(u);
        for v in neighbors(tree, u) {
            if !seen[v] {
                visit(tree, v, seen, tour);
                tour.push(u);
            }
        }
    }
    visit(tree, root, &mut seen, &mut tour);
    tour
}

#[cfg(test)]
mod tests {
    use super::super::semiring::{ScalarSecondOrder, SecondOrder, SumProduct};
    use super::*;
    use approx::assert_relative_eq;

    /// A 3-part, 2-label chain with handpicked potentials.
    fn toy() -> (FactorTree, Vec<Vec<f64>>) {
        let tree = FactorTree::chain(3, 2).unwrap();
        let w = vec![
            vec![0.7, 1.3],
            vec![1.0, 0.4],
            vec![0.9, 1.1],
            vec![0.2, 1.0, 0.8, 0.5],
            vec![1.4, 0.3, 0.6, 1.0],
        ];
        (tree, w)
    }

    fn structures(r: usize, m: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..r {
            let mut next = Vec::new();
            for prefix in out {
                for l in 0..m {
                    let mut p = prefix.clone();
                    p.push(l);
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }

    fn weight_of(tree: &FactorTree, w: &[Vec<f64>], y: &[usize]) -> f64 {
        (0..tree.n_factors())
            .map(|f| {
                let labels: Vec<usize> =
                    tree.factor_parts(f).iter().map(|&p| y[p]).collect();
                w[f][tree.assignment_index(f, &labels)]
            })
            .product()
    }

    #[test]
    fn single_variable_single_factor() {
        let tree = FactorTree::new(1, 3, vec![vec![0]]).unwrap();
        let weights = vec![vec![0.3, 0.5, 0.2]];
        let msgs = run_bp(&SumProduct, &tree, &weights, &[None], 0);
        let b = belief(&SumProduct, &tree, &msgs, 0);
        assert_relative_eq!(b[0], 0.3);
        assert_relative_eq!(b[1], 0.5);
        assert_relative_eq!(b[2], 0.2);
    }

    #[test]
    fn sum_product_matches_enumeration() {
        let (tree, w) = toy();
        for root in 0..(tree.n_parts() + tree.n_factors()) {
            let msgs = run_bp(&SumProduct, &tree, &w, &[None; 3], root);
            for r in 0..3 {
                let b = belief(&SumProduct, &tree, &msgs, r);
                for label in 0..2 {
                    let brute: f64 = structures(3, 2)
                        .into_iter()
                        .filter(|y| y[r] == label)
                        .map(|y| weight_of(&tree, &w, &y))
                        .sum();
                    assert_relative_eq!(b[label], brute, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn second_order_matches_enumeration() {
        // a and b decomposed over the same factors as the weights.
        let (tree, p) = toy();
        let a_tbl = vec![
            vec![0.5, -0.2],
            vec![1.0, 0.3],
            vec![-0.6, 0.8],
            vec![0.1, 0.2, -0.3, 0.4],
            vec![0.9, -0.5, 0.0, 0.7],
        ];
        let b_tbl = vec![
            vec![-0.4, 1.2],
            vec![0.2, 0.2],
            vec![1.0, -1.0],
            vec![0.6, 0.0, 0.5, -0.2],
            vec![0.3, 0.8, -0.7, 0.1],
        ];
        let sem = SecondOrder;
        let weights: Vec<Vec<ScalarSecondOrder>> = (0..tree.n_factors())
            .map(|f| {
                (0..tree.factor_rows(f))
                    .map(|idx| ScalarSecondOrder::weight(p[f][idx], a_tbl[f][idx], b_tbl[f][idx]))
                    .collect()
            })
            .collect();
        let table_value = |y: &[usize], tbl: &[Vec<f64>]| -> f64 {
            (0..tree.n_factors())
                .map(|f| {
                    let labels: Vec<usize> =
                        tree.factor_parts(f).iter().map(|&pt| y[pt]).collect();
                    tbl[f][tree.assignment_index(f, &labels)]
                })
                .sum()
        };
        for root in [0usize, 2, 4] {
            let msgs = run_bp(&sem, &tree, &weights, &[None; 3], root);
            for r in 0..3 {
                let b = belief(&sem, &tree, &msgs, r);
                for label in 0..2 {
                    let brute: f64 = structures(3, 2)
                        .into_iter()
                        .filter(|y| y[r] == label)
                        .map(|y| {
                            weight_of(&tree, &p, &y)
                                * table_value(&y, &a_tbl)
                                * table_value(&y, &b_tbl)
                        })
                        .sum();
                    assert_relative_eq!(b[label].c, brute, max_relative = 1e-10, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn fixed_assignments_constrain_the_sum() {
        let (tree, w) = toy();
        let assignments = [None, Some(1), None];
        let msgs = run_bp(&SumProduct, &tree, &w, &assignments, 0);
        let b = belief(&SumProduct, &tree, &msgs, 2);
        for label in 0..2 {
            let brute: f64 = structures(3, 2)
                .into_iter()
                .filter(|y| y[2] == label && y[1] == 1)
                .map(|y| weight_of(&tree, &w, &y))
                .sum();
            assert_relative_eq!(b[label], brute, max_relative = 1e-12);
        }
    }

    #[test]
    fn euler_tour_traverses_each_edge_twice() {
        let tree = FactorTree::chain(3, 2).unwrap();
        let tour = euler_tour(&tree, 0);
        let n_edges: usize = (0..tree.n_factors()).map(|f| tree.factor_parts(f).len()).sum();
        assert_eq!(tour.len(), 2 * n_edges + 1);
        assert_eq!(tour[0], 0);
        assert_eq!(*tour.last().unwrap(), 0);
        let mut seen = std::collections::HashSet::new();
        for w in tour.windows(2) {
            assert!(neighbors(&tree, w[0]).contains(&w[1]));
            seen.insert((w[0], w[1]));
        }
        assert_eq!(seen.len(), 2 * n_edges);
    }
}
