//! Numerical laboratory for variational Carleson-type operators.
//!
//! Every algorithm works on uniform grids ([`SampledFunction`]) and exact dyadic
//! arithmetic ([`DyadicInterval`]); the modules build on each other from variation
//! norms up through wave packets, tree selection and the SU(1,1) summation operator.

pub mod error;
pub mod exponent;
pub mod fourier;
pub mod grid;
pub mod lepingle;
pub mod nlft;
pub mod mpz;
pub mod sharpness;
pub mod timefreq;
pub mod treeselect;
pub mod varnorm;

pub use error::{Error, Result};
pub use exponent::Exponent;
pub use grid::{decreasing_rearrangement, dyadic_children, lorentz_norm, Domain, DyadicInterval, LorentzParams, SampledFunction};
pub use num_complex::Complex64;
pub use varnorm::{dual_linearization, variation_norm, IndexedSequence, VariationParams};
