//! Christoffel-Darboux kernels for unitary-invariant Hermitian ensembles with
//! a finite-rank external source.
//!
//! The kernel is assembled from the orthogonal polynomials of `e^{-V}` alone
//! (see [`source_kernel`]) and checked against an independent
//! biorthogonal Gram construction ([`oracle`]), the coefficient identities
//! behind the construction ([`consistency`]), a Fredholm determinant for the
//! largest eigenvalue ([`fredholm`]) and direct sampling ([`ensemble_mc`]).

pub mod consistency;
pub mod ensemble_mc;
pub mod error;
pub mod fredholm;
pub mod linalg;
pub mod oracle;
pub mod orthopoly;
pub mod quadrature;
pub mod source_kernel;
pub mod weight;

pub use error::{Error, Result};
pub use orthopoly::{build_recurrence, cd_kernel_k0, eval_monic, extract_coeffs, PolyCoeffs, RecurrenceTable};
pub use quadrature::{custom_weight_rule, gauss_hermite_rule, integrate_weighted, legendre_rule, QuadratureRule, RuleKind};
pub use source_kernel::{matrix_b, vector_v, KernelModel, ModelOptions, SourceSpec};
pub use weight::WeightSpec;
pub use consistency::{build_qs, projection_identity, row_identity, IdentityCheck, QsMatrices, TruncationSet};
pub use ensemble_mc::{empirical_density, empirical_lmax_cdf, sample_spectra, Histogram, SampleBatch};
pub use fredholm::{lmax_cdf, lmax_quantile, FredholmConfig, FredholmValue};
pub use oracle::{build_gram, oracle_k, GramOracle, PhiBasis};
