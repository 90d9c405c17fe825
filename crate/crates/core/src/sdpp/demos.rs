//! Self-contained structured-DPP demos: one-dimensional particle tracking
//! and diverse geographic paths between cities.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dual::DualEigenbasis;
use crate::error::{DppError, Result};
use crate::sdpp::{
    ksdpp_sample, part_marginals, sdpp_sample, FactorTables, FactorTree, SdppModel, Structure,
};

/// Configuration for the particle-tracking demo: `r` time steps, `m`
/// discretized positions, `d` diversity features. The kernel is rescaled so
/// that the expected number of trajectories per sample hits
/// `target_cardinality`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackingConfig {
    pub m: usize,
    pub r: usize,
    pub d: usize,
    pub target_cardinality: f64,
    pub samples: usize,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        TrackingConfig { m: 50, r: 50, d: 50, target_cardinality: 5.0, samples: 4 }
    }
}

/// Calibrated tracking model plus the data needed to sample from it.
pub struct TrackingDemo {
    pub model: SdppModel,
    pub c: DMatrix<f64>,
    pub eigen: DualEigenbasis,
    /// Multiplier applied to the squared quality mass during calibration.
    pub scale: f64,
    pub trace_k: f64,
}

fn gaussian_bump(x: f64, center: f64, sigma: f64) -> f64 {
    let z = (x - center) / sigma;
    (-0.5 * z * z).exp()
}

/// Builds the uncalibrated tracking model: a chain of `r` positions with a
/// trimodal initial-quality curve (primary mode at M/2, secondary modes at
/// M/5 and 4M/5), Gaussian transition smoothness, and position-bump
/// diversity features on the positional factors only.
fn tracking_model(cfg: &TrackingConfig) -> Result<SdppModel> {
    let m = cfg.m;
    let tree = FactorTree::chain(cfg.r, m)?;
    let sigma_mode = (m as f64 / 10.0).max(1.0);
    let sigma_step = (m as f64 / 25.0).max(1.0);
    let sigma_feat = (m as f64 / 10.0).max(1.0);
    let primary = 0.5 * m as f64;
    let secondary_lo = 0.2 * m as f64;
    let secondary_hi = 0.8 * m as f64;

    let mut q = Vec::new();
    let mut phi = Vec::new();
    for f in 0..tree.n_factors() {
        let parts = tree.factor_parts(f).to_vec();
        let rows = tree.factor_rows(f);
        if parts.len() == 1 {
            let part = parts[0];
            let quality: Vec<f64> = (0..rows)
                .map(|y| {
                    if part == 0 {
                        gaussian_bump(y as f64, primary, sigma_mode)
                            + 0.5 * gaussian_bump(y as f64, secondary_lo, sigma_mode)
                            + 0.5 * gaussian_bump(y as f64, secondary_hi, sigma_mode)
                    } else {
                        1.0
                    }
                })
                .collect();
            let features: Vec<DVector<f64>> = (0..rows)
                .map(|y| {
                    let mut v = DVector::from_fn(cfg.d, |l, _| {
                        // Feature centers spread evenly over the positions.
                        let center = (l as f64 + 0.5) * m as f64 / cfg.d as f64;
                        gaussian_bump(y as f64, center, sigma_feat)
                    });
                    let norm = v.norm();
                    if norm > 0.0 {
                        v /= norm;
                    }
                    v
                })
                .collect();
            q.push(quality);
            phi.push(features);
        } else {
            // Transition quality peaks when the particle stays put; the
            // transitional factors carry no diversity features.
            let quality: Vec<f64> = (0..rows)
                .map(|idx| {
                    let labels = tree.assignment_labels(f, idx);
                    gaussian_bump(labels[0] as f64, labels[1] as f64, sigma_step)
                })
                .collect();
            q.push(quality);
            phi.push(vec![DVector::zeros(cfg.d); rows]);
        }
    }
    let tables = FactorTables::new(&tree, q, phi)?;
    Ok(SdppModel::new(tree, tables))
}

/// Expected cardinality `tr(K) = Σ_n sλ_n/(sλ_n+1)` under a global spectrum
/// scale `s`.
fn trace_k_scaled(lambdas: &DVector<f64>, s: f64) -> f64 {
    lambdas.iter().map(|&l| s * l / (s * l + 1.0)).sum()
}

/// Calibrates the tracking model so the expected sample cardinality equals
/// the target (bisection on a global quality scale, tolerance 1e-3).
pub fn demo_tracking(cfg: &TrackingConfig) -> Result<TrackingDemo> {
    let mut model = tracking_model(cfg)?;
    let (c0, mass) = model.dual_c();
    if mass <= 0.0 {
        return Err(DppError::DegenerateModel("tracking model has zero mass".into()));
    }
    let eigen0 = DualEigenbasis::of_matrix(&c0)?;
    let lambdas = eigen0.eigenvalues().clone_owned();
    let rank = lambdas.iter().filter(|&&l| l > 0.0).count();
    if (rank as f64) < cfg.target_cardinality {
        return Err(DppError::DegenerateModel(format!(
            "kernel rank {rank} cannot reach expected cardinality {}",
            cfg.target_cardinality
        )));
    }
    // The spectrum scale varies over hundreds of orders of magnitude with
    // R, so bracket the target from both sides before bisecting. Bisection
    // runs in log space to keep the bracket well conditioned.
    let mut lo = 1.0f64;
    let mut hi = 1.0f64;
    while trace_k_scaled(&lambdas, lo) > cfg.target_cardinality {
        lo *= 1e-2;
        if lo < 1e-300 {
            return Err(DppError::DegenerateModel("calibration diverged".into()));
        }
    }
    while trace_k_scaled(&lambdas, hi) < cfg.target_cardinality {
        hi *= 1e2;
        if hi > 1e300 {
            return Err(DppError::DegenerateModel("calibration diverged".into()));
        }
    }
    let mut s = hi;
    for _ in 0..2000 {
        let mid = (0.5 * (lo.ln() + hi.ln())).exp();
        if trace_k_scaled(&lambdas, mid) < cfg.target_cardinality {
            lo = mid;
        } else {
            hi = mid;
        }
        s = hi;
        if (trace_k_scaled(&lambdas, s) - cfg.target_cardinality).abs() <= 1e-3 {
            break;
        }
    }
    // Scaling every q^2(y) by s scales C linearly; push sqrt(s) into one
    // factor's quality table so sampling sees a consistent model.
    model.tables.scale_factor_quality(0, s.sqrt());
    let c = c0 * s;
    let eigen = DualEigenbasis::of_matrix(&c)?;
    let trace_k = eigen.eigenvalues().iter().map(|&l| l / (l + 1.0)).sum();
    Ok(TrackingDemo { model, c, eigen, scale: s, trace_k })
}

impl TrackingDemo {
    pub fn sample_set<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Structure>> {
        sdpp_sample(&self.model, &self.c, &self.eigen, rng)
    }

    /// Independent baseline: draws `count` structures i.i.d. with
    /// probability proportional to `q^2(y)` (plain sum-product sampling,
    /// no diversity kernel).
    pub fn sample_independent<R: Rng + ?Sized>(
        &self,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<Structure>> {
        (0..count).map(|_| sample_quality_proportional(&self.model, rng)).collect()
    }

    pub fn part_marginals(&self) -> DMatrix<f64> {
        part_marginals(&self.model, &self.eigen)
    }
}

/// Draws one structure with probability proportional to `q^2(y)` by
/// sum-product message passing (the independent baseline of the tracking
/// figure).
pub fn sample_quality_proportional<R: Rng + ?Sized>(
    model: &SdppModel,
    rng: &mut R,
) -> Result<Structure> {
    use crate::sdpp::bp::{belief, euler_tour, run_bp, update_message};
    use crate::sdpp::semiring::SumProduct;

    let sem = SumProduct;
    let tree = &model.tree;
    let weights: Vec<Vec<f64>> = (0..tree.n_factors())
        .map(|f| {
            (0..tree.factor_rows(f))
                .map(|idx| {
                    let q = model.tables.q_row(f, idx);
                    q * q
                })
                .collect()
        })
        .collect();
    let r_count = tree.n_parts();
    let mut assignments: Vec<Option<usize>> = vec![None; r_count];
    let mut msgs = run_bp(&sem, tree, &weights, &assignments, 0);
    let tour = euler_tour(tree, 0);
    for t in 0..tour.len() {
        let node = tour[t];
        if node < r_count && assignments[node].is_none() {
            let masses = belief(&sem, tree, &msgs, node);
            let total: f64 = masses.iter().sum();
            if !(total > 0.0) {
                return Err(DppError::DegenerateModel("zero quality mass".into()));
            }
            let u: f64 = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = masses.len() - 1;
            for (label, &w) in masses.iter().enumerate() {
                acc += w;
                if u < acc {
                    chosen = label;
                    break;
                }
            }
            assignments[node] = Some(chosen);
        }
        if t + 1 < tour.len() {
            update_message(&sem, tree, &weights, &mut msgs, &assignments, node, tour[t + 1]);
        }
    }
    let labels: Vec<usize> = assignments.into_iter().map(Option::unwrap).collect();
    Structure::new(labels, tree.n_labels())
}

/// Mean pairwise L1 trajectory distance within a sample set (0 for fewer
/// than two trajectories).
pub fn mean_pairwise_distance(set: &[Structure]) -> f64 {
    if set.len() < 2 {
        return 0.0;
    }
    let r = set[0].labels().len() as f64;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..set.len() {
        for j in (i + 1)..set.len() {
            let d: f64 = set[i]
                .labels()
                .iter()
                .zip(set[j].labels())
                .map(|(&a, &b)| (a as f64 - b as f64).abs())
                .sum();
            total += d / r;
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// JSON-ready output of the tracking demo.
#[derive(Debug, Serialize, Deserialize)]
pub struct TrackingOutput {
    pub scale: f64,
    pub trace_k: f64,
    pub samples: Vec<Vec<Vec<usize>>>,
    pub part_marginals: Vec<Vec<f64>>,
}

pub fn demo_tracking_output<R: Rng + ?Sized>(
    cfg: &TrackingConfig,
    rng: &mut R,
) -> Result<TrackingOutput> {
    let demo = demo_tracking(cfg)?;
    let mut samples = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let set = demo.sample_set(rng)?;
        samples.push(set.iter().map(|y| y.labels().to_vec()).collect());
    }
    let mu = demo.part_marginals();
    let part_marginals = (0..mu.nrows())
        .map(|r| (0..mu.ncols()).map(|l| mu[(r, l)]).collect())
        .collect();
    Ok(TrackingOutput { scale: demo.scale, trace_k: demo.trace_k, samples, part_marginals })
}

/// A city in the geographic-paths demo.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct City {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub weight: f64,
}

/// Number of stops per path; fixed by the demo design.
pub const PATH_PARTS: usize = 4;

/// Paths demo model. Labels are direction-augmented: label `(u, v)` means
/// "at city v, arrived from city u"; paths that return in the direction
/// they came from get quality zero.
pub struct PathsDemo {
    pub model: SdppModel,
    pub c: DMatrix<f64>,
    pub eigen: DualEigenbasis,
    pub cities: Vec<City>,
}

fn euclid(a: &City, b: &City) -> f64 {
    ((a.lat - b.lat).powi(2) + (a.lon - b.lon).powi(2)).sqrt()
}

/// Builds the R=4 chain over direction-augmented city labels.
pub fn build_paths_model(cities: &[City]) -> Result<PathsDemo> {
    let n_cities = cities.len();
    if n_cities == 0 {
        return Err(DppError::InvalidInput("empty city list".into()));
    }
    let m = n_cities * n_cities; // label = (from, at)
    let tree = FactorTree::chain(PATH_PARTS, m)?;

    // Distance scale for the transition quality.
    let mut dist_sum = 0.0;
    let mut dist_count = 0usize;
    for i in 0..n_cities {
        for j in (i + 1)..n_cities {
            dist_sum += euclid(&cities[i], &cities[j]);
            dist_count += 1;
        }
    }
    let sigma = if dist_count > 0 { (dist_sum / dist_count as f64).max(1e-9) } else { 1.0 };

    // Inverse-distance diversity features, one slot per city.
    let feature_of = |at: usize| -> DVector<f64> {
        let mut v = DVector::from_fn(n_cities, |j, _| {
            1.0 / (0.1 + euclid(&cities[at], &cities[j]) / sigma)
        });
        let norm = v.norm();
        v /= norm;
        v
    };

    let from_of = |label: usize| label / n_cities;
    let at_of = |label: usize| label % n_cities;

    let mut q = Vec::new();
    let mut phi = Vec::new();
    for f in 0..tree.n_factors() {
        let parts = tree.factor_parts(f).to_vec();
        let rows = tree.factor_rows(f);
        if parts.len() == 1 {
            let part = parts[0];
            let quality: Vec<f64> = (0..rows)
                .map(|label| {
                    let (u, v) = (from_of(label), at_of(label));
                    // Start labels are self-loops; later stops must have a
                    // distinct arrival city.
                    let ok = if part == 0 { u == v } else { u != v };
                    if ok {
                        cities[v].weight
                    } else {
                        0.0
                    }
                })
                .collect();
            let features: Vec<DVector<f64>> =
                (0..rows).map(|label| feature_of(at_of(label))).collect();
            q.push(quality);
            phi.push(features);
        } else {
            let quality: Vec<f64> = (0..rows)
                .map(|idx| {
                    let labels = tree.assignment_labels(f, idx);
                    let (prev_from, prev_at) = (from_of(labels[0]), at_of(labels[0]));
                    let (cur_from, cur_at) = (from_of(labels[1]), at_of(labels[1]));
                    // Consistency: we must depart from where we stood.
                    if cur_from != prev_at {
                        return 0.0;
                    }
                    // No standing still.
                    if cur_at == prev_at {
                        return 0.0;
                    }
                    // No immediate backtrack to the city we came from.
                    if prev_from != prev_at && cur_at == prev_from {
                        return 0.0;
                    }
                    (-euclid(&cities[prev_at], &cities[cur_at]) / sigma).exp()
                })
                .collect();
            q.push(quality);
            phi.push(vec![DVector::zeros(n_cities); rows]);
        }
    }
    let tables = FactorTables::new(&tree, q, phi)?;
    let model = SdppModel::new(tree, tables);
    let (c, mass) = model.dual_c();
    if mass <= 0.0 {
        return Err(DppError::DegenerateModel(
            "no feasible path has positive quality".into(),
        ));
    }
    let eigen = DualEigenbasis::of_matrix(&c)?;
    Ok(PathsDemo { model, c, eigen, cities: cities.to_vec() })
}

impl PathsDemo {
    /// City index sequence of a sampled structure.
    pub fn path_cities(&self, y: &Structure) -> Vec<usize> {
        let n = self.cities.len();
        y.labels().iter().map(|&label| label % n).collect()
    }

    /// Samples exactly `k` diverse paths.
    pub fn sample_paths<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
        let sets = ksdpp_sample(&self.model, &self.c, &self.eigen, k, rng)?;
        Ok(sets.iter().map(|y| self.path_cities(y)).collect())
    }
}

/// JSON-ready output of the paths demo.
#[derive(Debug, Serialize, Deserialize)]
pub struct PathsOutput {
    pub paths: Vec<Vec<String>>,
}

pub fn demo_paths_output<R: Rng + ?Sized>(
    cities: &[City],
    k: usize,
    rng: &mut R,
) -> Result<PathsOutput> {
    let demo = build_paths_model(cities)?;
    let paths = demo
        .sample_paths(k, rng)?
        .into_iter()
        .map(|p| p.into_iter().map(|i| demo.cities[i].name.clone()).collect())
        .collect();
    Ok(PathsOutput { paths })
}
