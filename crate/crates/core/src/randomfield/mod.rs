//! Covariance kernels, Karhunen-Loève bases and the log-normal coefficient.

mod coefficient;
mod kernel;
mod kl;

pub use coefficient::{second_moment_sum, CoefficientScaling, FieldModel, LognormalCoefficient};
pub use kernel::{distance, x_bessel_k1, CovarianceKernel, KernelKind};
pub use kl::{exponential_root, modes_for_tolerance, KlBasis, NystromGrid, Truncation};
