//! Model documents and file formats shared between the library and CLI.
//!
//! Kernels load from headerless CSV (one row per line) or from a JSON
//! document carrying exactly one payload: an explicit `L`, a
//! quality/features decomposition (features column-major, one vector per
//! item), or a structured factor-tree model. An optional `projection`
//! block asks the loader to apply a seeded random projection to the
//! features at load time.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dual::DualRepresentation;
use crate::error::{DppError, Result};
use crate::kernel::{LEnsemble, QualityDiversity};
use crate::projections::{project_features, ProjectionMatrix};
use crate::sdpp::demos::City;
use crate::sdpp::{FactorTables, FactorTree, SdppModel};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProjectionSpec {
    pub d: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SdppFactorDoc {
    pub parts: Vec<usize>,
    pub q: Vec<f64>,
    /// One feature vector per assignment row.
    pub phi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SdppDoc {
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub factors: Vec<SdppFactorDoc>,
}

/// The on-disk model format. Exactly one of `l`, `quality`+`features`, or
/// `sdpp` must be present.
#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
pub struct ModelDocument {
    pub schema_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sdpp: Option<SdppDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Applied to the features when the document is loaded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionSpec>,
    /// Record of a projection that has already been folded into the
    /// features; informational only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projection_applied: Option<ProjectionSpec>,
}

/// A validated, loaded model.
pub enum LoadedModel {
    Explicit(LEnsemble),
    /// Quality scores plus feature columns (`projected` features are no
    /// longer unit norm).
    Features { quality: DVector<f64>, features: DMatrix<f64>, projected: bool },
    Sdpp(SdppModel),
}

impl LoadedModel {
    pub fn n_items(&self) -> Option<usize> {
        match self {
            LoadedModel::Explicit(l) => Some(l.n_items()),
            LoadedModel::Features { quality, .. } => Some(quality.len()),
            LoadedModel::Sdpp(_) => None,
        }
    }

    /// The primal kernel; errors for structured models.
    pub fn l_ensemble(&self) -> Result<LEnsemble> {
        match self {
            LoadedModel::Explicit(l) => Ok(l.clone()),
            LoadedModel::Features { quality, features, .. } => {
                let mut b = features.clone();
                for i in 0..b.ncols() {
                    let mut col = b.column_mut(i);
                    col *= quality[i];
                }
                LEnsemble::from_matrix(b.transpose() * &b)
            }
            LoadedModel::Sdpp(_) => Err(DppError::Document(
                "structured models have no explicit kernel; use the sdpp subcommands".into(),
            )),
        }
    }

    /// The dual representation; only feature-decomposed models have one.
    pub fn dual(&self) -> Result<DualRepresentation> {
        match self {
            LoadedModel::Features { quality, features, .. } => {
                let mut b = features.clone();
                for i in 0..b.ncols() {
                    let mut col = b.column_mut(i);
                    col *= quality[i];
                }
                let c = &b * b.transpose();
                let n = b.ncols();
                let cols: Vec<DVector<f64>> =
                    (0..n).map(|i| b.column(i).clone_owned()).collect();
                Ok(DualRepresentation::from_provider(
                    c,
                    n,
                    std::sync::Arc::new(move |i| cols[i].clone()),
                ))
            }
            _ => Err(DppError::Document(
                "dual inference requires a quality/features model".into(),
            )),
        }
    }

    pub fn sdpp(&self) -> Result<&SdppModel> {
        match self {
            LoadedModel::Sdpp(m) => Ok(m),
            _ => Err(DppError::Document("this command requires an sdpp model".into())),
        }
    }
}

impl ModelDocument {
    pub fn from_l(l: &LEnsemble) -> Self {
        let n = l.n_items();
        let rows = (0..n)
            .map(|i| (0..n).map(|j| l.matrix()[(i, j)]).collect())
            .collect();
        ModelDocument {
            schema_version: SCHEMA_VERSION.to_string(),
            n: Some(n),
            l: Some(rows),
            ..Default::default()
        }
    }

    pub fn from_features(quality: &DVector<f64>, features: &DMatrix<f64>) -> Self {
        let cols = (0..features.ncols())
            .map(|i| features.column(i).iter().copied().collect())
            .collect();
        ModelDocument {
            schema_version: SCHEMA_VERSION.to_string(),
            n: Some(quality.len()),
            quality: Some(quality.iter().copied().collect()),
            features: Some(cols),
            ..Default::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| DppError::Document(e.to_string()))
    }

    pub fn load(&self) -> Result<LoadedModel> {
        let payloads = [self.l.is_some(), self.quality.is_some(), self.sdpp.is_some()];
        if payloads.iter().filter(|&&p| p).count() != 1 {
            return Err(DppError::Document(
                "exactly one of L, quality+features, or sdpp must be present".into(),
            ));
        }
        if self.quality.is_some() != self.features.is_some() {
            return Err(DppError::Document(
                "quality and features must appear together".into(),
            ));
        }
        if let Some(rows) = &self.l {
            if self.projection.is_some() {
                return Err(DppError::Document(
                    "an explicit kernel has no features to project".into(),
                ));
            }
            let n = rows.len();
            if let Some(decl) = self.n {
                if decl != n {
                    return Err(DppError::Document(format!(
                        "declared n = {decl} but L has {n} rows"
                    )));
                }
            }
            if rows.iter().any(|r| r.len() != n) {
                return Err(DppError::Document("L is not square".into()));
            }
            let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            return Ok(LoadedModel::Explicit(LEnsemble::from_matrix(m)?));
        }
        if let (Some(q), Some(cols)) = (&self.quality, &self.features) {
            let n = q.len();
            if cols.len() != n {
                return Err(DppError::Document(format!(
                    "{n} quality scores but {} feature columns",
                    cols.len()
                )));
            }
            let d = cols.first().map_or(0, Vec::len);
            if cols.iter().any(|c| c.len() != d) || d == 0 {
                return Err(DppError::Document("ragged or empty feature columns".into()));
            }
            let phi = DMatrix::from_fn(d, n, |r, c| cols[c][r]);
            let quality = DVector::from_iterator(n, q.iter().copied());
            // Validate through the decomposition type (positive quality,
            // unit columns), then optionally project.
            let qd = QualityDiversity::new(quality, phi)?;
            if let Some(spec) = &self.projection {
                let g = ProjectionMatrix::generate(spec.d, qd.dim(), spec.seed)?;
                let projected = project_features(&g, qd.features())?;
                return Ok(LoadedModel::Features {
                    quality: qd.quality().clone(),
                    features: projected,
                    projected: true,
                });
            }
            return Ok(LoadedModel::Features {
                quality: qd.quality().clone(),
                features: qd.features().clone(),
                projected: false,
            });
        }
        let doc = self.sdpp.as_ref().expect("payload check above");
        let tree = FactorTree::new(
            doc.r,
            doc.m,
            doc.factors.iter().map(|f| f.parts.clone()).collect(),
        )?;
        let q = doc.factors.iter().map(|f| f.q.clone()).collect();
        let phi: Vec<Vec<DVector<f64>>> = doc
            .factors
            .iter()
            .map(|f| {
                f.phi
                    .iter()
                    .map(|col| DVector::from_iterator(col.len(), col.iter().copied()))
                    .collect()
            })
            .collect();
        let tables = FactorTables::new(&tree, q, phi)?;
        let mut model = SdppModel::new(tree, tables);
        if let Some(spec) = &self.projection {
            let g = ProjectionMatrix::generate(spec.d, model.dim(), spec.seed)?;
            model = SdppModel::new(model.tree, model.tables.project_features(g.matrix())?);
        }
        Ok(LoadedModel::Sdpp(model))
    }
}

/// Serializes with every float printed to 17 significant digits, enough for
/// exact f64 round trips.
pub fn to_json_precise<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, PreciseFormatter);
    value.serialize(&mut ser).expect("serialization cannot fail for in-memory writers");
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

struct PreciseFormatter;

impl serde_json::ser::Formatter for PreciseFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{:.16e}", value)
    }
}

/// Parses a headerless comma-separated square matrix.
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| DppError::Parse {
                line: lineno + 1,
                message: format!("invalid number {field:?}"),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(DppError::Parse { line: 1, message: "empty matrix".into() });
    }
    if rows.iter().any(|r| r.len() != n) {
        return Err(DppError::Parse { line: 1, message: "matrix is not square".into() });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Parses a city file: `name,lat,lon,weight` per line.
pub fn parse_city_csv(text: &str) -> Result<Vec<City>> {
    let mut cities = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(DppError::Parse {
                line: lineno + 1,
                message: format!("expected name,lat,lon,weight; found {} fields", fields.len()),
            });
        }
        let parse_num = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| DppError::Parse {
                line: lineno + 1,
                message: format!("invalid {what} {s:?}"),
            })
        };
        let lat = parse_num(fields[1], "latitude")?;
        let lon = parse_num(fields[2], "longitude")?;
        let weight = parse_num(fields[3], "weight")?;
        if !(weight > 0.0) {
            return Err(DppError::Parse {
                line: lineno + 1,
                message: format!("weight must be positive, found {weight}"),
            });
        }
        cities.push(City { name: fields[0].to_string(), lat, lon, weight });
    }
    if cities.is_empty() {
        return Err(DppError::Parse { line: 1, message: "empty city file".into() });
    }
    Ok(cities)
}
