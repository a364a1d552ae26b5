//! Direct sampling of filtered (regularized) P-function quasiprobabilities
//! from homodyne quadrature data.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix `f64`, which every pipeline in the CLI uses.

pub mod error;
pub mod estimator;
pub mod filters;
pub mod gaussian_model;
pub mod hankel;
pub mod io;
pub mod pattern;
pub mod phase;
pub mod quadrature;
pub mod scalar;

pub use error::{Error, Result};
pub use estimator::{GridSpec, QuasiprobGrid};
pub use filters::{Exponent, FilterSpec, FilterTable, RadialFilter};
pub use pattern::PatternTable;
pub use gaussian_model::{GaussianState, PhasePolynomial, PhaseSchedule, Provenance, QuadratureDataset, QuadraturePoint};
pub use scalar::Real;

/// Complex amplitude in double precision.
pub type Complex64 = num_complex::Complex<f64>;

pub type State = GaussianState<f64>;
pub type Dataset = QuadratureDataset<f64>;
pub type Filter = FilterSpec<f64>;
pub type Table = FilterTable<f64>;

pub type State32 = GaussianState<f32>;
pub type Dataset32 = QuadratureDataset<f32>;
pub type Filter32 = FilterSpec<f32>;
pub type Table32 = FilterTable<f32>;
pub type Pattern = PatternTable<f64>;
pub type Grid = GridSpec<f64>;
pub type Estimate = QuasiprobGrid<f64>;
