//! Matrix moment sequences on the half line.
//!
//! The crate works with finite sequences of Hermitian q x q moment matrices
//! and the block Hankel structure they generate. It provides:
//!
//! * definiteness classification of a sequence (solvable, extendably
//!   solvable, nondegenerate) via its block Hankel matrices,
//! * the Schur-complement parametrization of a sequence and its inverse,
//! * Dyukarev-Stieltjes mass/length parameters and the conversions between
//!   the two parametrizations,
//! * reciprocal sequences and the associated Schur-type transform,
//! * orthogonal matrix polynomials of the first and second kind,
//! * the resolvent matrix of a nondegenerate sequence together with its
//!   elementary-factor and polynomial representations,
//! * atomic matrix measures, their Stieltjes transforms, the extremal
//!   transforms of a sequence, and scalar measure recovery,
//! * a randomized verification harness that re-checks the algebraic
//!   identities tying all of the above together.
//!
//! All numerics are dense complex `f64` backed by [`nalgebra`]. Tolerances
//! are carried explicitly through a [`matkit::TolerancePolicy`] rather than
//! hidden in module state.

pub mod dsparams;
pub mod hankel;
pub mod matkit;
pub mod measures;
pub mod parametrize;
pub mod polyomp;
pub mod resolvent;
pub mod schur;
pub mod verify;

/// Crate-wide error type.
///
/// Numerical checks that merely fail (a residual above tolerance) are not
/// errors; they are reported through the verification tables. Errors are
/// reserved for inputs that make the requested computation meaningless.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Matrix or sequence dimensions are inconsistent.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A matrix fails a required structural property (Hermitian, finite).
    #[error("structural violation: {0}")]
    Structure(String),
    /// The sequence is too short for the requested order.
    #[error("not enough moments: {0}")]
    Length(String),
    /// A matrix that must be inverted is singular or too ill conditioned.
    #[error("{block} is singular or ill conditioned (condition estimate {cond:.3e})")]
    Conditioning { block: String, cond: f64 },
    /// The sequence lies outside the class the operation requires.
    #[error("sequence class violation: {0}")]
    Classification(String),
    /// The operation is only implemented for scalar data (q = 1).
    #[error("restricted to scalar data: {0}")]
    Scope(String),
    /// An evaluation point is outside the admissible domain.
    #[error("evaluation outside admissible domain: {0}")]
    Domain(String),
    /// A measure does not reproduce the moments it is claimed to match.
    #[error("moment mismatch: {0}")]
    MomentMismatch(String),
    /// A rational function is not the Stieltjes transform of a nonnegative
    /// measure on the half line.
    #[error("not a Stieltjes transform: {0}")]
    NotStieltjes(String),
    /// Any other invalid input.
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = core::result::Result<T, Error>;
