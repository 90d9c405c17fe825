//! Subcommand argument structs and thin adapters onto the library. No
//! numerical logic lives here.

use clap::Args;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use dpp_core::dual::{dual_marginal_entry, dual_normalizer, dual_sample};
use dpp_core::error::{DppError, Result};
use dpp_core::inference::{
    self, complement_marginal, condition as condition_op, greedy_map,
    jaccard, marginal as marginal_op, mbr_decode, normalizer, partial_marginal,
    LengthWindow, LikelihoodFormula,
};
use dpp_core::io::{
    parse_city_csv, parse_matrix_csv, LoadedModel, ModelDocument, ProjectionSpec,
};
use dpp_core::kdpp::{kdpp_normalizer, kdpp_sample, kdpp_singleton_marginals};
use dpp_core::kernel::{l_to_k, LEnsemble};
use dpp_core::learning::{
    mixture_deltas, mixture_objective_grad, train_mixture, train_quality, ConditionalInstance,
    TrainConfig,
};
use dpp_core::oracle::EnumerationBudget;
use dpp_core::projections::{bound_validation, projection_dim};
use dpp_core::sdpp::demos::{demo_paths_output, demo_tracking_output, TrackingConfig};
use dpp_core::sdpp::{self, part_marginals};
use dpp_core::subset::{ConditionSpec, SubsetSelection};

use crate::output::emit;

fn load_model(path: &Path) -> Result<LoadedModel> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let matrix = parse_matrix_csv(&text)?;
        return Ok(LoadedModel::Explicit(LEnsemble::from_matrix(matrix)?));
    }
    ModelDocument::parse(&text)?.load()
}

fn parse_items(spec: &str, n: usize) -> Result<SubsetSelection> {
    if spec.trim().is_empty() {
        return Ok(SubsetSelection::empty());
    }
    let items = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| DppError::InvalidInput(format!("bad item index {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    SubsetSelection::new(items, n)
}

/// Resolves the seed, generating one from OS entropy when absent. The seed
/// is always printed so the run can be reproduced.
fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| rand::rng().random())
}

#[derive(Serialize)]
struct SeedLine {
    seed: u64,
}

#[derive(Serialize)]
struct LogValueLine {
    log_value: f64,
    value: f64,
}

#[derive(Serialize)]
struct ItemsLine {
    items: Vec<usize>,
}

#[derive(Args)]
pub struct NormalizeArgs {
    #[arg(short, long)]
    model: PathBuf,
}

pub fn normalize(args: NormalizeArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let lv = match &model {
        LoadedModel::Sdpp(m) => dual_normalizer(&m.dual_eigen()?),
        _ => {
            // Feature models go through the dual: same value, cheaper when
            // D < N.
            match model.dual() {
                Ok(rep) => dual_normalizer(&rep.eigen()?),
                Err(_) => normalizer(&model.l_ensemble()?.eigen()),
            }
        }
    };
    emit(&LogValueLine { log_value: lv.log, value: lv.linear });
    Ok(())
}

#[derive(Args)]
pub struct ProbArgs {
    #[arg(short, long)]
    model: PathBuf,
    /// Comma-separated item indices.
    #[arg(long)]
    items: String,
    #[arg(long, value_parser = ["l-ratio", "k-mixed", "k-signed"], default_value = "l-ratio")]
    formula: String,
}

pub fn prob(args: ProbArgs) -> Result<()> {
    let l = load_model(&args.model)?.l_ensemble()?;
    let y = parse_items(&args.items, l.n_items())?;
    let formula = match args.formula.as_str() {
        "k-mixed" => LikelihoodFormula::KMixed,
        "k-signed" => LikelihoodFormula::KSigned,
        _ => LikelihoodFormula::LRatio,
    };
    let lv = inference::set_probability(&l, &y, formula);
    emit(&LogValueLine { log_value: lv.log, value: lv.linear });
    Ok(())
}

#[derive(Args)]
pub struct MarginalArgs {
    #[arg(short, long)]
    model: PathBuf,
    /// Items that must appear.
    #[arg(long, default_value = "")]
    items: String,
    /// Items that must not appear.
    #[arg(long, default_value = "")]
    exclude: String,
    /// Use the dual representation for singleton/pair entries.
    #[arg(long)]
    dual: bool,
}

pub fn marginal(args: MarginalArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    if args.dual {
        let rep = model.dual()?;
        let eigen = rep.eigen()?;
        let include = parse_items(&args.items, rep.n_items())?;
        if !parse_items(&args.exclude, rep.n_items())?.is_empty() {
            return Err(DppError::InvalidInput(
                "--dual supports inclusion marginals only".into(),
            ));
        }
        let items: Vec<usize> = include.iter().collect();
        let mut k_sub = DMatrix::zeros(items.len(), items.len());
        for (a, &i) in items.iter().enumerate() {
            for (b, &j) in items.iter().enumerate() {
                k_sub[(a, b)] = dual_marginal_entry(&rep, &eigen, i, j);
            }
        }
        emit(&serde_json::json!({ "value": k_sub.determinant() }));
        return Ok(());
    }
    let l = model.l_ensemble()?;
    let k = l_to_k(&l.eigen());
    let include = parse_items(&args.items, l.n_items())?;
    let exclude = parse_items(&args.exclude, l.n_items())?;
    let value = if exclude.is_empty() {
        marginal_op(&k, &include)
    } else if include.is_empty() {
        complement_marginal(&k, &exclude)
    } else {
        partial_marginal(&k, &ConditionSpec::new(include, exclude)?)?
    };
    emit(&serde_json::json!({ "value": value }));
    Ok(())
}

#[derive(Args)]
pub struct ConditionArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(long, default_value = "")]
    include: String,
    #[arg(long, default_value = "")]
    exclude: String,
}

#[derive(Serialize)]
struct ConditionOut {
    model: ModelDocument,
    kept: Vec<usize>,
}

pub fn condition(args: ConditionArgs) -> Result<()> {
    let l = load_model(&args.model)?.l_ensemble()?;
    let spec = ConditionSpec::new(
        parse_items(&args.include, l.n_items())?,
        parse_items(&args.exclude, l.n_items())?,
    )?;
    let cond = condition_op(&l, &spec)?;
    emit(&ConditionOut { model: ModelDocument::from_l(&cond.model), kept: cond.kept });
    Ok(())
}

#[derive(Args)]
pub struct SampleArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Sample through the dual representation (requires features).
    #[arg(long)]
    dual: bool,
}

pub fn sample(args: SampleArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let seed = resolve_seed(args.seed);
    emit(&SeedLine { seed });
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    if args.dual {
        let rep = model.dual()?;
        let eigen = rep.eigen()?;
        for _ in 0..args.count {
            let y = dual_sample(&rep, &eigen, &mut rng)?;
            emit(&ItemsLine { items: y.into() });
        }
        return Ok(());
    }
    let spec = model.l_ensemble()?.eigen();
    for _ in 0..args.count {
        let y = inference::sample(&spec, &mut rng);
        emit(&ItemsLine { items: y.into() });
    }
    Ok(())
}

#[derive(Args)]
pub struct KsampleArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(short, long)]
    k: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    count: usize,
}

pub fn ksample(args: KsampleArgs) -> Result<()> {
    let spec = load_model(&args.model)?.l_ensemble()?.eigen();
    let seed = resolve_seed(args.seed);
    emit(&SeedLine { seed });
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    for _ in 0..args.count {
        let y = kdpp_sample(&spec, args.k, &mut rng)?;
        emit(&ItemsLine { items: y.into() });
    }
    Ok(())
}

#[derive(Args)]
pub struct KnormalizeArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(short, long)]
    k: usize,
}

pub fn knormalize(args: KnormalizeArgs) -> Result<()> {
    let spec = load_model(&args.model)?.l_ensemble()?.eigen();
    let z = kdpp_normalizer(spec.eigenvalues(), args.k)?;
    emit(&LogValueLine { log_value: z.log, value: z.linear });
    Ok(())
}

#[derive(Args)]
pub struct KmarginalsArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(short, long)]
    k: usize,
}

pub fn kmarginals(args: KmarginalsArgs) -> Result<()> {
    let spec = load_model(&args.model)?.l_ensemble()?.eigen();
    let values = kdpp_singleton_marginals(&spec, args.k)?;
    emit(&serde_json::json!({ "values": values.iter().copied().collect::<Vec<f64>>() }));
    Ok(())
}

#[derive(Args)]
pub struct MapArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(long)]
    budget: f64,
    /// Comma-separated per-item costs; defaults to 1 per item.
    #[arg(long)]
    costs: Option<String>,
}

pub fn map(args: MapArgs) -> Result<()> {
    let l = load_model(&args.model)?.l_ensemble()?;
    let n = l.n_items();
    let costs = match &args.costs {
        Some(spec) => spec
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| DppError::InvalidInput(format!("bad cost {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?,
        None => vec![1.0; n],
    };
    let y = greedy_map(&l, &costs, args.budget)?;
    let log_det = dpp_core::linalg::principal_minor_log_det(l.matrix(), y.items());
    emit(&serde_json::json!({
        "items": y.items(),
        "log_det": log_det,
    }));
    Ok(())
}

#[derive(Args)]
pub struct MbrArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Cardinality window: reject samples outside [min-len, max-len].
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
}

pub fn mbr(args: MbrArgs) -> Result<()> {
    let spec = load_model(&args.model)?.l_ensemble()?.eigen();
    let seed = resolve_seed(args.seed);
    emit(&SeedLine { seed });
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let window = match (args.min_len, args.max_len) {
        (None, None) => None,
        (lo, hi) => Some(LengthWindow { min: lo.unwrap_or(0), max: hi.unwrap_or(usize::MAX) }),
    };
    let y = mbr_decode(
        |r| inference::sample(&spec, r),
        args.samples,
        jaccard,
        window,
        &mut rng,
    )?;
    emit(&ItemsLine { items: y.into() });
    Ok(())
}

#[derive(Deserialize)]
struct InstanceDoc {
    f: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
    y: Vec<usize>,
}

fn load_instances(path: &Path) -> Result<Vec<ConditionalInstance>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: InstanceDoc = serde_json::from_str(line).map_err(|e| DppError::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let n = doc.f.len();
        if n == 0 || doc.phi.len() != n {
            return Err(DppError::Parse {
                line: lineno + 1,
                message: "f and phi must list one vector per item".into(),
            });
        }
        let m = doc.f[0].len();
        let d = doc.phi[0].len();
        let f = DMatrix::from_fn(m, n, |r, c| doc.f[c][r]);
        let phi = DMatrix::from_fn(d, n, |r, c| doc.phi[c][r]);
        let label = SubsetSelection::new(doc.y.clone(), n)?;
        out.push(ConditionalInstance::new(f, phi, label)?);
    }
    if out.is_empty() {
        return Err(DppError::Parse { line: 1, message: "no training instances".into() });
    }
    Ok(out)
}

#[derive(Args)]
pub struct LearnArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    l2: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
}

pub fn learn(args: LearnArgs) -> Result<()> {
    let data = load_instances(&args.data)?;
    let m = data[0].feature_dim();
    let config = TrainConfig { tol: args.tol, max_iters: args.max_iters, l2: args.l2 };
    let report = train_quality(&data, DVector::zeros(m), &config)?;
    if report.dropped > 0 {
        eprintln!(
            "warning: dropped {} instance(s) whose labeled set has zero similarity volume",
            report.dropped
        );
    }
    emit(&serde_json::json!({
        "theta": report.theta.iter().copied().collect::<Vec<f64>>(),
        "iterations": report.iterations,
        "grad_inf_norm": report.grad_inf_norm,
        "objective": report.objective,
        "dropped": report.dropped,
    }));
    Ok(())
}

#[derive(Deserialize)]
struct PairDoc {
    pos: Vec<usize>,
    neg: Vec<usize>,
}

#[derive(Args)]
pub struct MixtureLearnArgs {
    /// JSON lines of {"pos": [...], "neg": [...]} preference pairs.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated expert model files.
    #[arg(long)]
    experts: String,
    #[arg(short, long)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
}

pub fn mixture_learn(args: MixtureLearnArgs) -> Result<()> {
    let experts = args
        .experts
        .split(',')
        .map(|p| load_model(Path::new(p.trim()))?.l_ensemble())
        .collect::<Result<Vec<_>>>()?;
    if experts.is_empty() {
        return Err(DppError::InvalidInput("no experts given".into()));
    }
    let n = experts[0].n_items();
    let text = std::fs::read_to_string(&args.data)?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: PairDoc = serde_json::from_str(line).map_err(|e| DppError::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        pairs.push((
            SubsetSelection::new(doc.pos, n)?,
            SubsetSelection::new(doc.neg, n)?,
        ));
    }
    let deltas = mixture_deltas(&experts, &pairs, args.k, args.gamma)?;
    let report = train_mixture(&deltas, experts.len(), args.max_iters, 1e-9)?;
    let (loss, _) = mixture_objective_grad(&report.params.theta, &deltas);
    emit(&serde_json::json!({
        "theta": report.params.theta.iter().copied().collect::<Vec<f64>>(),
        "loss": loss,
        "iterations": report.iterations,
    }));
    Ok(())
}

#[derive(Args)]
pub struct SdppSampleArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Sample exactly k structures per set.
    #[arg(short, long)]
    k: Option<usize>,
}

pub fn sdpp_sample(args: SdppSampleArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let sdpp_model = model.sdpp()?;
    let (c, _) = sdpp_model.dual_c();
    let eigen = dpp_core::dual::DualEigenbasis::of_matrix(&c)?;
    let seed = resolve_seed(args.seed);
    emit(&SeedLine { seed });
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    for _ in 0..args.count {
        let set = match args.k {
            Some(k) => sdpp::ksdpp_sample(sdpp_model, &c, &eigen, k, &mut rng)?,
            None => sdpp::sdpp_sample(sdpp_model, &c, &eigen, &mut rng)?,
        };
        let structures: Vec<Vec<usize>> =
            set.iter().map(|y| y.labels().to_vec()).collect();
        emit(&serde_json::json!({ "structures": structures }));
    }
    Ok(())
}

#[derive(Args)]
pub struct SdppMarginalsArgs {
    #[arg(short, long)]
    model: PathBuf,
}

pub fn sdpp_marginals(args: SdppMarginalsArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let sdpp_model = model.sdpp()?;
    let eigen = sdpp_model.dual_eigen()?;
    let mu = part_marginals(sdpp_model, &eigen);
    let rows: Vec<Vec<f64>> = (0..mu.nrows())
        .map(|r| (0..mu.ncols()).map(|c| mu[(r, c)]).collect())
        .collect();
    emit(&serde_json::json!({ "mu": rows }));
    Ok(())
}

#[derive(Args)]
pub struct SdppTrackArgs {
    #[arg(long, default_value_t = 50)]
    m: usize,
    #[arg(long, default_value_t = 50)]
    r: usize,
    #[arg(long, default_value_t = 50)]
    d: usize,
    #[arg(long, default_value_t = 5.0)]
    target: f64,
    #[arg(long, default_value_t = 4)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn sdpp_track(args: SdppTrackArgs) -> Result<()> {
    let cfg = TrackingConfig {
        m: args.m,
        r: args.r,
        d: args.d,
        target_cardinality: args.target,
        samples: args.samples,
    };
    let seed = resolve_seed(args.seed);
    emit(&SeedLine { seed });
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let out = demo_tracking_output(&cfg, &mut rng)?;
    emit(&out);
    Ok(())
}

#[derive(Args)]
pub struct SdppPathsArgs {
    /// City file: name,lat,lon,weight per line.
    #[arg(long)]
    cities: PathBuf,
    #[arg(short, long, default_value_t = 2)]
    k: usize,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn sdpp_paths(args: SdppPathsArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.cities)?;
    let cities = parse_city_csv(&text)?;
    let seed = resolve_seed(args.seed);
    emit(&SeedLine { seed });
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let out = demo_paths_output(&cities, args.k, &mut rng)?;
    emit(&out);
    Ok(())
}

#[derive(Args)]
pub struct ProjectArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(short, long)]
    d: usize,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn project(args: ProjectArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.model)?;
    let mut doc = ModelDocument::parse(&text)?;
    if doc.projection.is_some() {
        return Err(DppError::Document(
            "model already carries a pending projection".into(),
        ));
    }
    let seed = resolve_seed(args.seed);
    doc.projection = Some(ProjectionSpec { d: args.d, seed });
    // Loading applies the projection; emit a document with the projected
    // features folded in.
    match doc.load()? {
        LoadedModel::Features { quality, features, .. } => {
            let mut out = ModelDocument::from_features(&quality, &features);
            out.projection_applied = Some(ProjectionSpec { d: args.d, seed });
            out.k = doc.k;
            emit(&out);
            Ok(())
        }
        LoadedModel::Sdpp(model) => {
            let factors = (0..model.tree.n_factors())
                .map(|f| dpp_core::io::SdppFactorDoc {
                    parts: model.tree.factor_parts(f).to_vec(),
                    q: model.tables.q_table(f).to_vec(),
                    phi: (0..model.tree.factor_rows(f))
                        .map(|idx| model.tables.phi_row(f, idx).iter().copied().collect())
                        .collect(),
                })
                .collect();
            let out = ModelDocument {
                schema_version: dpp_core::io::SCHEMA_VERSION.to_string(),
                sdpp: Some(dpp_core::io::SdppDoc {
                    r: model.tree.n_parts(),
                    m: model.tree.n_labels(),
                    factors,
                }),
                projection_applied: Some(ProjectionSpec { d: args.d, seed }),
                k: doc.k,
                ..Default::default()
            };
            emit(&out);
            Ok(())
        }
        LoadedModel::Explicit(_) => Err(DppError::Document(
            "an explicit kernel has no features to project".into(),
        )),
    }
}

#[derive(Args)]
pub struct ProjectAnalyzeArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(short, long)]
    k: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the (independent) projection trials.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

pub fn project_analyze(args: ProjectAnalyzeArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let b = match &model {
        LoadedModel::Features { quality, features, .. } => {
            let mut b = features.clone();
            for i in 0..b.ncols() {
                let mut col = b.column_mut(i);
                col *= quality[i];
            }
            b
        }
        _ => {
            return Err(DppError::Document(
                "project-analyze requires a quality/features model".into(),
            ))
        }
    };
    let seed = resolve_seed(args.seed);
    emit(&SeedLine { seed });
    let budget = EnumerationBudget::from_env();
    let d = projection_dim(args.k, args.eps, args.delta, b.ncols())?;
    // Trials are independent with per-trial seeds, so splitting the trial
    // range across threads and merging in order reproduces the serial run
    // exactly.
    let jobs = args.jobs.max(1).min(args.trials.max(1));
    let report = if jobs <= 1 {
        bound_validation(&b, args.k, args.eps, args.delta, args.trials, seed, budget.max_subsets)?
    } else {
        let mut ranges = Vec::new();
        let base = args.trials / jobs;
        let extra = args.trials % jobs;
        let mut start = 0usize;
        for j in 0..jobs {
            let len = base + usize::from(j < extra);
            ranges.push((start, len));
            start += len;
        }
        let chunks: Vec<dpp_core::projections::BoundReport> = std::thread::scope(|scope| {
            let handles: Vec<_> = ranges
                .iter()
                .map(|&(offset, len)| {
                    let b = &b;
                    scope.spawn(move || {
                        dpp_core::projections::validate_at_dimension(
                            b,
                            args.k,
                            d,
                            args.eps,
                            len,
                            seed.wrapping_add(offset as u64),
                            budget.max_subsets,
                        )
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker thread")).collect::<Result<_>>()
        })?;
        let total: usize = chunks.iter().map(|c| c.trials).sum();
        let mean_l1 = chunks.iter().map(|c| c.mean_l1 * c.trials as f64).sum::<f64>()
            / total as f64;
        let satisfied = chunks
            .iter()
            .map(|c| c.satisfied_fraction * c.trials as f64)
            .sum::<f64>()
            / total as f64;
        dpp_core::projections::BoundReport {
            d,
            bound: chunks[0].bound,
            mean_l1,
            satisfied_fraction: satisfied,
            trials: total,
            generator: chunks[0].generator,
        }
    };
    emit(&serde_json::json!({
        "d": d,
        "mean_l1": report.mean_l1,
        "bound": report.bound,
        "satisfied_fraction": report.satisfied_fraction,
        "trials": report.trials,
        "generator": report.generator,
    }));
    Ok(())
}

#[derive(Args)]
pub struct OracleCheckArgs {
    #[arg(long, default_value = "all")]
    suite: String,
}

pub fn oracle_check(args: OracleCheckArgs) -> Result<()> {
    if args.suite != "all" {
        return Err(DppError::InvalidInput(format!("unknown suite {:?}", args.suite)));
    }
    let checks = crate::checks::run_all();
    let mut all_pass = true;
    for c in &checks {
        emit(&serde_json::json!({ "check": c.name, "pass": c.pass, "detail": c.detail }));
        all_pass &= c.pass;
    }
    emit(&serde_json::json!({ "total": checks.len(), "pass": all_pass }));
    if !all_pass {
        std::process::exit(4);
    }
    Ok(())
}
