//! Balancing by adaptive orthogonalization for time-varying treatments.

pub mod comparators;
pub mod diagnostics;
pub mod error;
pub mod estimate;
pub mod features;
pub mod linalg;
pub mod ortho;
pub mod panel;
pub mod qpsolve;
pub mod rng;
pub mod scalar;
pub mod simlab;
pub mod stats;
pub mod tune;

pub use error::{Error, Result};
pub use scalar::Real;

pub type MatrixF64 = linalg::Matrix<f64>;
pub type MatrixF32 = linalg::Matrix<f32>;
pub type QpProblemF64 = qpsolve::QpProblem<f64>;
pub type QpProblemF32 = qpsolve::QpProblem<f32>;
pub type WeightSolutionF64 = qpsolve::WeightSolution<f64>;
pub type WeightSolutionF32 = qpsolve::WeightSolution<f32>;
pub type WeightSummaryF64 = diagnostics::WeightSummary<f64>;
pub type LogisticFitF64 = comparators::LogisticFit<f64>;
