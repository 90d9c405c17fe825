//! JSON emission and error mapping for the CLI.

use dpp_core::io::to_json_precise;
use dpp_core::DppError;
use serde::Serialize;

/// Prints one JSON line (floats at 17 significant digits).
pub fn emit<T: Serialize>(value: &T) {
    println!("{}", to_json_precise(value));
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

#[derive(Serialize)]
struct ErrorDoc<'a> {
    error: ErrorBody<'a>,
}

fn kind(err: &DppError) -> &'static str {
    match err {
        DppError::InvalidInput(_) => "invalid-input",
        DppError::DegenerateItem { .. } => "degenerate-item",
        DppError::NotAnLEnsemble { .. } => "not-an-l-ensemble",
        DppError::ZeroProbabilityCondition => "zero-probability-condition",
        DppError::CardinalityMismatch { .. } => "cardinality-mismatch",
        DppError::InfeasibleCardinality { .. } => "infeasible-cardinality",
        DppError::InfeasibleWindow => "infeasible-window",
        DppError::UnsupportedTopology(_) => "unsupported-topology",
        DppError::DegenerateModel(_) => "degenerate-model",
        DppError::InternalDegeneracy(_) => "internal-degeneracy",
        DppError::Diverged(_) => "diverged",
        DppError::UnsupportedScale(_) => "unsupported-scale",
        DppError::Parse { .. } => "parse-error",
        DppError::Io(_) => "io-error",
        DppError::Document(_) => "invalid-model",
    }
}

pub fn error_json(err: &DppError) -> String {
    to_json_precise(&ErrorDoc {
        error: ErrorBody { kind: kind(err), message: err.to_string() },
    })
}

/// Exit codes: model/validation problems 3, infeasible inference 4,
/// everything else 1 (clap handles usage errors with 2).
pub fn exit_code(err: &DppError) -> i32 {
    match err {
        DppError::InvalidInput(_)
        | DppError::Parse { .. }
        | DppError::Document(_)
        | DppError::DegenerateItem { .. } => 3,
        DppError::ZeroProbabilityCondition
        | DppError::NotAnLEnsemble { .. }
        | DppError::CardinalityMismatch { .. }
        | DppError::InfeasibleCardinality { .. }
        | DppError::InfeasibleWindow
        | DppError::UnsupportedTopology(_)
        | DppError::DegenerateModel(_)
        | DppError::UnsupportedScale(_) => 4,
        _ => 1,
    }
}
