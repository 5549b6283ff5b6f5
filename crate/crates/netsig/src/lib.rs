#![allow(clippy::needless_range_loop)]

//! Community and meso-scale structure detection as formal hypothesis testing.
//!
//! The workflow mirrors a classical significance test:
//!
//! 1. fit a maximum-entropy null model to the observed graph
//!    ([`nullmodel`]),
//! 2. maximize the normalised block statistic Z over node labelings
//!    ([`zstat`], [`anneal`]),
//! 3. repeat the identical optimization on graphs sampled from the null and
//!    report a Monte-Carlo pseudo p-value ([`pipeline`]).
//!
//! The numeric core is generic over the floating-point scalar through
//! [`scalar::Scalar`]; the aliases below pin the default `f64` precision
//! used by the CLI and the test suites.

pub mod anneal;
pub mod assets;
pub mod block;
pub mod error;
pub mod generators;
pub mod graph;
pub mod nullmodel;
pub mod optim;
pub mod pipeline;
pub mod scalar;
pub mod seed;
pub mod spectral;
pub mod zstat;

pub use anneal::{greedy_polish, maximize_z, AnnealConfig};
pub use block::BlockMatrix;
pub use error::{Error, Result};
pub use graph::{distance_matrix, load_coords_csv, load_edge_list, write_edge_list, Graph};
pub use nullmodel::{
    fit, fit_configuration, fit_er, fit_gravity, fit_rdpg, sample, BinSpec, FitOptions, NullKind,
    NullSpec,
};
pub use pipeline::{
    kesten_stigum_boundary, run_left_tail_test, run_test, sweep, sweep_with, ExperimentSpec,
    PatternSpec, SweepReport, Tail, TestConfig,
};
pub use scalar::Scalar;
pub use spectral::top_eigenpairs;
pub use zstat::{block_stats, Labeling};

/// Default-precision aliases.
pub type NullModel64 = nullmodel::NullModel<f64>;
pub type ProbMatrix64 = nullmodel::ProbMatrix<f64>;
pub type EigenBasis64 = spectral::EigenBasis<f64>;
pub type BlockStats64 = zstat::BlockStats<f64>;
pub type OptimumReport64 = anneal::OptimumReport<f64>;
pub type TestResult64 = pipeline::TestResult<f64>;

/// Single-precision aliases for memory-bound experiments.
pub type NullModel32 = nullmodel::NullModel<f32>;
pub type ProbMatrix32 = nullmodel::ProbMatrix<f32>;
pub type EigenBasis32 = spectral::EigenBasis<f32>;
pub type BlockStats32 = zstat::BlockStats<f32>;
pub type OptimumReport32 = anneal::OptimumReport<f32>;
pub type TestResult32 = pipeline::TestResult<f32>;
