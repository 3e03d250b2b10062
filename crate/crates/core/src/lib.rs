//! Label-efficient active learning for skeleton-based action recognition.
//!
//! The crate is generic over the floating-point scalar ([`Scalar`]: `f32` or
//! `f64`); the aliases at the crate root fix it to `f64`, which is what the
//! experiment pipeline and the CLI use.

pub mod acquisition;
pub mod al_loop;
pub mod config;
pub mod display;
pub mod experiments;
pub mod gcn;
pub mod metrics;
pub mod numkit;
pub mod skeleton_io;
pub mod training;
pub mod scalar;
pub mod verify;

pub use scalar::Scalar;

/// Default scalar of the experiment pipeline.
pub type Real = f64;

pub type Matrix = numkit::Matrix<Real>;
pub type Matrix32 = numkit::Matrix<f32>;
pub type GcnModel = gcn::GcnModel<Real>;
pub type DisplayProblem = display::DisplayProblem<Real>;
pub type DisplaySolution = display::DisplaySolution<Real>;
pub type DatasetSplit = skeleton_io::DatasetSplit<Real>;
pub type SkeletonGraph = skeleton_io::SkeletonGraph<Real>;
pub type GaussianSummary = metrics::GaussianSummary<Real>;
pub type AlReport = al_loop::AlReport<Real>;
