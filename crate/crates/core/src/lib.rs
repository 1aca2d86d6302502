//! Numerical laboratory for the model stochastic parabolic Dirichlet problem
//! on the half-space: counter-based Wiener ensembles, finite-difference
//! fields, the half-line Poisson-kernel solver, semi-implicit ensemble
//! solvers, and Monte Carlo estimators of stochastic Hölder norms.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix `f64`, which every experiment uses.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coefficients;
pub mod error;
pub mod extension;
pub mod field;
pub mod norms;
pub mod halfline;
pub mod lab;
pub mod pipeline;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Grid = field::SpaceTimeGrid<f64>;
pub type Field = field::FieldEnsemble<f64>;
pub type Modal = field::ModalField<f64>;
pub type Trace = field::BoundaryField<f64>;
pub type Noise = rng::WienerBatch<f64>;
