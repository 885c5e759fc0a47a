//! Injective, permutation-invariant embeddings of `N x D` multisets by sum
//! pooling, with an exact decoder.
//!
//! Two architectures are provided: [`Arch::Lp`] pools power maps of linear
//! projections, [`Arch::Le`] pools exponentials of linear forms. Both have
//! width polynomial in `N` and `D`, and both are decoded by recovering
//! scalar multisets from power sums and stitching them together through an
//! anchor projection.

pub mod analysis;
pub mod decoder;
pub mod encoder;
pub mod error;
mod matching;
pub mod multiset;
pub mod powersum;
pub mod weights;

pub use decoder::{
    decode, decode_complex, decode_embedding, decode_le, decode_lp, roundtrip, roundtrip_with,
    DecodeFailure, DecodeReport,
};
pub use encoder::{encode, encode_complex, encode_le, encode_lp, ComplexSetMatrix, Embedding};
pub use error::{Error, Result};
pub use multiset::{
    canonicalize, equiv_check, is_anchor, set_distance, PermutationVector, SetMatrix,
    ToleranceConfig,
};
pub use powersum::{Domain, MonicPolynomial, PowerSums};
pub use weights::{
    dims, Arch, BankMode, DimensionReport, LEExponentSet, LPWeightSet, WeightHeader, Weights,
};
