//! Snapshot compressive imaging under sensor saturation.
//!
//! A snapshot camera multiplexes `B` mask-coded frames onto one sensor
//! exposure, and bright scenes push the summed intensities past the
//! sensor's clip level. This crate provides the clipped forward model, the
//! finite-sample recovery bound that links reconstruction error to mask
//! density and saturation severity, brute-force codebook solvers that
//! certify the bound at desk scale, and a saturation-aware plug-and-play
//! reconstruction loop, plus the experiment harness tying them together.
//!
//! Modules map onto the pipeline:
//!
//! - [`model`]: forward operator, adjoint, Gram diagonal, clipping.
//! - [`mask`]: reproducible Bernoulli mask sampling and density grids.
//! - [`theory`]: saturated-fraction estimator, recovery bound, density
//!   optimizer.
//! - [`csp`]: enumerable codebooks and exhaustive (saturation-aware)
//!   nearest-codeword search.
//! - [`recon`]: GAP iterations with pluggable denoisers, plain and
//!   saturation-aware.
//! - [`scene`], [`metrics`], [`sweep`], [`verify`], [`io`]: harness.

pub mod csp;
pub mod error;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod recon;
pub mod scene;
pub mod sweep;
pub mod theory;
pub mod verify;

pub use error::{Error, Result};
pub use mask::{default_density_grid, fine_density_grid, sample_masks, DensityGrid, MaskSpec};
pub use model::{
    adjoint, clip, forward, gram_diagonal, saturated_indices, Cube, MaskSet, Measurement,
    ModelParams,
};
pub use recon::{
    reconstruct, sapnet_residual, tv_denoise, Denoiser, ExternalDenoiser, IdentityDenoiser,
    ReconResult, SolverConfig, SolverMode, TvDenoiser,
};
pub use theory::{
    estimate_ps, normalized_bound_g, optimal_density, theorem_bound, BoundParams, BoundResult,
    GConfig, NormalizedBound, PsEstimate,
};
