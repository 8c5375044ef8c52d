//! Solvers for elliptic equations with log-normal random coefficients.
//!
//! Two stochastic models share one discretization:
//!
//! * the classical model, `-div(a grad u) = f`, whose stochastic Galerkin
//!   system couples every chaos mode with every other, and
//! * the Wick-type model, whose flux is `(1/a)^{⋄(-1)} ⋄ grad u`; its
//!   Galerkin system is block lower triangular and is solved by one
//!   factorization and a forward substitution.
//!
//! The Wick-type model is cheap and close to the classical one (the gap is
//! second order in the standard deviation of the underlying Gaussian field),
//! so the crate uses it as a preconditioner for Richardson and GMRES
//! iterations on the classical system, and as a control variate for plain
//! Monte Carlo sampling of the classical model.
//!
//! Module map:
//!
//! * [`chaos`]: multi-indices, Hermite algebra, triple products, Wick products.
//! * [`randomfield`]: covariance kernels, Karhunen-Loève bases, chaos
//!   coefficients of the log-normal field.
//! * [`fem`]: Lagrange finite elements on structured 1D/2D grids.
//! * [`galerkin`]: the two propagators and the iterative solvers.
//! * [`montecarlo`]: plain and control-variate estimators.
//! * [`experiments`]: config-driven runners that produce tables and CSV files.

pub mod chaos;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod galerkin;
pub mod montecarlo;
pub mod randomfield;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/chaos.md")]
    mod chaos {}
    #[doc = include_str!("../../../book/src/random-fields.md")]
    mod random_fields {}
    #[doc = include_str!("../../../book/src/fem.md")]
    mod fem {}
    #[doc = include_str!("../../../book/src/galerkin.md")]
    mod galerkin {}
    #[doc = include_str!("../../../book/src/monte-carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
