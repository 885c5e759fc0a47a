use thiserror::Error;

use crate::decoder::DecodeFailure;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("permutation search over {n} rows exceeds the cap of {cap}")]
    PermSearchCap { n: usize, cap: usize },

    #[error("need at least {need} power sums, have {have}")]
    InsufficientDegree { have: usize, need: usize },

    #[error("polynomial degree {degree} exceeds the configured cap of {cap}")]
    DegreeCap { degree: usize, cap: usize },

    #[error(
        "root finder did not converge for degree {degree} after {iterations} iterations \
         (backward error {backward_error:.3e})"
    )]
    NonConvergence {
        degree: usize,
        iterations: usize,
        backward_error: f64,
    },

    #[error("recovered root has imaginary part {imag:.3e} above tolerance {tol:.3e}")]
    ImaginaryResidue { imag: f64, tol: f64 },

    #[error("recovered multiset reproduces the power sums only to {residual:.3e} (tolerance {tol:.3e})")]
    InversionResidual { residual: f64, tol: f64 },

    #[error("missing bivariate moment S({deg_real}, {deg_imag})")]
    MissingMoment { deg_real: usize, deg_imag: usize },

    #[error("random anchor bank failed the independence self-check after {attempts} attempts")]
    AnchorSelfCheck { attempts: usize },

    #[error("no anchor found among {candidates} candidates")]
    NoAnchor { candidates: usize },

    #[error("no consistent perfect matching between channel values and anchor slots")]
    NoMatching,

    #[error("non-positive exponential value {value:.3e} recovered")]
    NonPositive { value: f64 },

    #[error("numeric overflow: {0}")]
    Overflow(String),

    #[error("inverting block {block} failed")]
    BlockInversion {
        block: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("decode failed: {0}")]
    Decode(Box<DecodeFailure>),

    #[error("{classes} equivalence classes exceed the enumeration guard of {guard}")]
    ClassGuard { classes: u128, guard: u128 },

    #[error("search budget exhausted after {searched} classes without a collision")]
    BudgetExhausted { searched: usize },

    #[error("function is not permutation invariant: f(X) = {original}, f(PX) = {permuted}")]
    NotInvariant { original: f64, permuted: f64 },
}

impl Error {
    /// True for failures caused by floating-point conditioning rather than by
    /// malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::ImaginaryResidue { .. }
                | Error::InversionResidual { .. }
                | Error::NoAnchor { .. }
                | Error::NoMatching
                | Error::NonPositive { .. }
                | Error::Overflow(_)
                | Error::BlockInversion { .. }
                | Error::Decode(_)
                | Error::AnchorSelfCheck { .. }
                | Error::BudgetExhausted { .. }
        )
    }
}
