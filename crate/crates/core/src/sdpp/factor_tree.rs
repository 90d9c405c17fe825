//! Tree-structured factor graphs over parts with a shared label set.

use nalgebra::DVector;

use crate::error::{DppError, Result};

/// A bipartite factor graph over `R` parts, each taking one of `M` labels.
/// The graph (variables on one side, factors on the other, an edge whenever
/// a part belongs to a factor) must be a tree.
#[derive(Debug, Clone)]
pub struct FactorTree {
    n_parts: usize,
    n_labels: usize,
    /// Parts of each factor, sorted ascending; degree 1 or 2.
    factors: Vec<Vec<usize>>,
    /// Factors touching each part.
    part_factors: Vec<Vec<usize>>,
}

impl FactorTree {
    pub fn new(n_parts: usize, n_labels: usize, factors: Vec<Vec<usize>>) -> Result<Self> {
        if n_parts == 0 || n_labels == 0 {
            return Err(DppError::InvalidInput("empty part or label set".into()));
        }
        let mut part_factors = vec![Vec::new(); n_parts];
        let mut edges = 0usize;
        let mut sorted_factors = Vec::with_capacity(factors.len());
        for (f, mut parts) in factors.into_iter().enumerate() {
            parts.sort_unstable();
            parts.dedup();
            if parts.is_empty() || parts.len() > 2 {
                return Err(DppError::UnsupportedTopology(format!(
                    "factor {f} has degree {}, only unary and pairwise factors are supported",
                    parts.len()
                )));
            }
            for &p in &parts {
                if p >= n_parts {
                    return Err(DppError::InvalidInput(format!(
                        "factor {f} references part {p} out of range"
                    )));
                }
                part_factors[p].push(f);
                edges += 1;
            }
            sorted_factors.push(parts);
        }
        for (p, fs) in part_factors.iter().enumerate() {
            if fs.is_empty() {
                return Err(DppError::UnsupportedTopology(format!(
                    "part {p} belongs to no factor"
                )));
            }
        }
        let tree = FactorTree {
            n_parts,
            n_labels,
            factors: sorted_factors,
            part_factors,
        };
        let nodes = tree.n_parts + tree.factors.len();
        if edges != nodes - 1 {
            return Err(DppError::UnsupportedTopology(format!(
                "{edges} edges over {nodes} nodes; the factor graph is not a tree"
            )));
        }
        if !tree.is_connected() {
            return Err(DppError::UnsupportedTopology(
                "factor graph is disconnected".into(),
            ));
        }
        Ok(tree)
    }

    /// A chain over `n_parts` with one unary factor per part and one
    /// pairwise factor between neighbors; the layout used by both demos.
    pub fn chain(n_parts: usize, n_labels: usize) -> Result<Self> {
        let mut factors: Vec<Vec<usize>> = (0..n_parts).map(|r| vec![r]).collect();
        for r in 1..n_parts {
            factors.push(vec![r - 1, r]);
        }
        FactorTree::new(n_parts, n_labels, factors)
    }

    fn is_connected(&self) -> bool {
        let nodes = self.n_parts + self.factors.len();
        let mut seen = vec![false; nodes];
        let mut stack = vec![0usize]; // start at part 0
        seen[0] = true;
        let mut visited = 0;
        while let Some(u) = stack.pop() {
            visited += 1;
            if u < self.n_parts {
                for &f in &self.part_factors[u] {
                    let v = self.n_parts + f;
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            } else {
                for &p in &self.factors[u - self.n_parts] {
                    if !seen[p] {
                        seen[p] = true;
                        stack.push(p);
                    }
                }
            }
        }
        visited == nodes
    }

    pub fn n_parts(&self) -> usize {
        self.n_parts
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn factor_parts(&self, f: usize) -> &[usize] {
        &self.factors[f]
    }

    pub fn part_factors(&self, r: usize) -> &[usize] {
        &self.part_factors[r]
    }

    /// Number of assignment rows in factor `f`'s table: `M^{degree}`.
    pub fn factor_rows(&self, f: usize) -> usize {
        self.n_labels.pow(self.factors[f].len() as u32)
    }

    /// Flattened index of an assignment to factor `f`'s parts, mixed-radix
    /// with the first (lowest-numbered) part most significant.
    pub fn assignment_index(&self, _f: usize, labels: &[usize]) -> usize {
        let mut idx = 0;
        for &l in labels {
            idx = idx * self.n_labels + l;
        }
        idx
    }

    /// Inverse of [`assignment_index`].
    pub fn assignment_labels(&self, f: usize, mut idx: usize) -> Vec<usize> {
        let deg = self.factors[f].len();
        let mut labels = vec![0usize; deg];
        for slot in (0..deg).rev() {
            labels[slot] = idx % self.n_labels;
            idx /= self.n_labels;
        }
        labels
    }
}

/// Per-factor quality and diversity tables. Quality entries are
/// nonnegative; feature columns are unit norm or exactly zero (transitional
/// factors in the demos carry no diversity features).
#[derive(Debug, Clone)]
pub struct FactorTables {
    q: Vec<Vec<f64>>,
    phi: Vec<Vec<DVector<f64>>>,
    dim: usize,
}

impl FactorTables {
    pub fn new(tree: &FactorTree, q: Vec<Vec<f64>>, phi: Vec<Vec<DVector<f64>>>) -> Result<Self> {
        let tables = Self::new_unnormalized(tree, q, phi)?;
        for (f, cols) in tables.phi.iter().enumerate() {
            for (row, col) in cols.iter().enumerate() {
                let norm = col.norm();
                if norm != 0.0 && (norm - 1.0).abs() > 1e-9 {
                    return Err(DppError::InvalidInput(format!(
                        "feature for factor {f}, assignment {row} has norm {norm}; \
                         expected 1 or exactly 0"
                    )));
                }
            }
        }
        Ok(tables)
    }

    /// Like [`FactorTables::new`] but without the unit-norm requirement on
    /// features. Random projection deliberately produces non-unit features.
    pub fn new_unnormalized(
        tree: &FactorTree,
        q: Vec<Vec<f64>>,
        phi: Vec<Vec<DVector<f64>>>,
    ) -> Result<Self> {
        if q.len() != tree.n_factors() || phi.len() != tree.n_factors() {
            return Err(DppError::InvalidInput(
                "one quality and one feature table per factor is required".into(),
            ));
        }
        let mut dim = None;
        for f in 0..tree.n_factors() {
            let rows = tree.factor_rows(f);
            if q[f].len() != rows || phi[f].len() != rows {
                return Err(DppError::InvalidInput(format!(
                    "factor {f} needs {rows} table rows"
                )));
            }
            if q[f].iter().any(|&v| !(v >= 0.0)) {
                return Err(DppError::InvalidInput(format!(
                    "factor {f} has a negative quality entry"
                )));
            }
            for col in &phi[f] {
                match dim {
                    None => dim = Some(col.len()),
                    Some(d) if d == col.len() => {}
                    Some(d) => {
                        return Err(DppError::InvalidInput(format!(
                            "feature dimension mismatch: {d} vs {}",
                            col.len()
                        )))
                    }
                }
            }
        }
        Ok(FactorTables { q, phi, dim: dim.unwrap_or(0) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn q_row(&self, f: usize, idx: usize) -> f64 {
        self.q[f][idx]
    }

    pub fn phi_row(&self, f: usize, idx: usize) -> &DVector<f64> {
        &self.phi[f][idx]
    }

    pub fn q_table(&self, f: usize) -> &[f64] {
        &self.q[f]
    }

    /// Scales one quality table in place (used for global kernel
    /// rescaling: multiplying a single factor's `q` by `sqrt(s)` scales
    /// every `q^2(y)` by `s`).
    pub fn scale_factor_quality(&mut self, f: usize, scale: f64) {
        for v in &mut self.q[f] {
            *v *= scale;
        }
    }

    /// Replaces every feature column by `G φ` for a projection matrix `G`.
    pub fn project_features(&self, g: &nalgebra::DMatrix<f64>) -> Result<Self> {
        if g.ncols() != self.dim {
            return Err(DppError::InvalidInput(format!(
                "projection expects {} columns, features have dimension {}",
                g.ncols(),
                self.dim
            )));
        }
        let phi = self
            .phi
            .iter()
            .map(|cols| cols.iter().map(|col| g * col).collect())
            .collect();
        Ok(FactorTables { q: self.q.clone(), phi, dim: g.nrows() })
    }

    /// Multiplicative quality `q(y) = Π_α q_α(y_α)`.
    pub fn quality(&self, tree: &FactorTree, y: &Structure) -> f64 {
        (0..tree.n_factors())
            .map(|f| {
                let labels: Vec<usize> =
                    tree.factor_parts(f).iter().map(|&p| y.labels()[p]).collect();
                self.q[f][tree.assignment_index(f, &labels)]
            })
            .product()
    }

    /// Additive diversity features `φ(y) = Σ_α φ_α(y_α)`.
    pub fn features(&self, tree: &FactorTree, y: &Structure) -> DVector<f64> {
        let mut acc = DVector::zeros(self.dim);
        for f in 0..tree.n_factors() {
            let labels: Vec<usize> =
                tree.factor_parts(f).iter().map(|&p| y.labels()[p]).collect();
            acc += &self.phi[f][tree.assignment_index(f, &labels)];
        }
        acc
    }
}

/// An assignment of one label to every part.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Structure {
    labels: Vec<usize>,
}

impl Structure {
    pub fn new(labels: Vec<usize>, n_labels: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_labels) {
            return Err(DppError::InvalidInput(format!(
                "label {bad} out of range ({n_labels} labels)"
            )));
        }
        Ok(Structure { labels })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}
