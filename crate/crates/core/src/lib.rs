//! Exact inference, sampling, and learning for determinantal point
//! processes (DPPs).
//!
//! A DPP is a distribution over subsets of a ground set in which
//! `P(A ⊆ Y) = det(K_A)` for a PSD marginal kernel `K`; it places high
//! probability on diverse subsets. This crate implements the standard
//! toolkit around the L-ensemble representation:
//!
//! - [`kernel`]: kernel construction, the quality/diversity decomposition,
//!   and conversions between `L` and the marginal kernel `K`;
//! - [`inference`]: normalization, likelihoods, marginals, conditioning,
//!   exact sampling, and greedy/MMR/MBR decoders;
//! - [`dual`]: low-rank inference through the D×D dual kernel `C = BB^T`;
//! - [`kdpp`]: fixed-cardinality DPPs via elementary symmetric polynomials;
//! - [`learning`]: maximum-likelihood learning of log-linear quality models
//!   and convex mixtures of k-DPP experts;
//! - [`sdpp`]: structured DPPs over factor trees with second-order
//!   semiring belief propagation;
//! - [`projections`]: random feature projections with the associated
//!   variational-distance validation;
//! - [`oracle`]: brute-force enumeration references used as ground truth
//!   in the test suites;
//! - [`io`]: JSON/CSV model documents shared with the CLI.
//!
//! Everything is deterministic given a seeded RNG; sampling entry points
//! take a caller-owned random stream.

pub mod dual;
pub mod error;
pub mod inference;
pub mod io;
pub mod kdpp;
pub mod kernel;
pub mod learning;
pub mod linalg;
pub mod oracle;
pub mod projections;
pub mod sdpp;
pub mod subset;

pub use error::{DppError, Result};
pub use kernel::{LEnsemble, MarginalKernel, QualityDiversity, SpectralDecomposition};
pub use linalg::LogValue;
pub use subset::{ConditionSpec, SubsetSelection};
