//! Matched lifting wavelets for compressively sensed images.
//!
//! The crate covers the full pipeline: partial canonical identity (random
//! pixel subset) and dense block sensing, separable multi-level lifting
//! decompositions (the Mallat R-pyramid and the L-pyramid that keeps
//! splitting lowpass directions), an ADMM basis-pursuit solver, and the
//! three-stage matched design that fits predict/update filters to a coarse
//! reconstruction before the final solve.

pub mod error;
pub mod experiment;
pub mod filterbank;
pub mod image;
pub mod lifting;
pub mod matched;
pub mod metrics;
pub mod pyramid;
pub mod sensing;
pub mod solver;
pub mod wavelets;

pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport, WaveletChoice};
pub use filterbank::{compose_filterbank, Filter, Filterbank};
pub use image::{load_image, save_image, scan, unscan, Image, ScanAxis, ScanSignal, ScanStrategy};
pub use lifting::{forward_1d, inverse_1d, transpose_inverse_1d, LiftingChain, LiftingStage};
pub use matched::{design_matched, reconstruct_matched, DesignConfig, DetailReference, MatchedDesign};
pub use metrics::{psnr, QualityReport};
pub use pyramid::{DecompositionPlan, LRule, Strategy, SubbandTree};
pub use sensing::{make_sensing, DenseSensing, MatrixKind, Measurements, SampleMask, Sensing};
pub use solver::{solve_bp, LinearOperator, SolveReport, SolverConfig};
pub use wavelets::StandardWavelet;
