//! Hermite polynomial algebra over truncated Wiener chaos spaces.
//!
//! The canonical representation everywhere in this crate is the
//! unnormalized `He_α` basis; orthonormal coefficients are a view obtained
//! through [`ChaosExpansion::to_normalization`].

mod expansion;
mod hermite;
mod index;
mod triple;

pub use expansion::{hermite_basis_values, wick_exponential, ChaosExpansion, Normalization};
pub use hermite::{
    binomial, chi, factorial, hermite_eval, hermite_table, product_expansion, shift_expansion,
    triple_product_1d,
};
pub use index::{cardinality, IndexSet, MultiIndex, DEFAULT_CARDINALITY_CAP};
pub use triple::{for_each_product_term, triple_product, ChaosMatrix, TripleProductTensor};
