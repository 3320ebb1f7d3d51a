//! Graph Tikhonov regularization with random spanning forests.
//!
//! The smoothing problem `min_z q‖z − y‖² + zᵀLz` has the closed form
//! `x̂ = K y` with `K = q(qI + L)⁻¹`. This crate estimates `x̂` by averaging
//! the signal over the trees of random rooted spanning forests (`x̄`), and
//! reduces the variance of that estimator with one gradient step
//! `z̄ = x̄ − α(K⁻¹x̄ − y)`, which keeps it unbiased.
//!
//! Modules:
//! - [`graph`]: weighted undirected graphs, generators and edge-list IO.
//! - [`linalg`]: Laplacian application, exact solvers and spectral checks.
//! - [`rsf`]: the forest sampler and the exhaustive forest enumeration oracle.
//! - [`estimators`]: `x̄`, `z̄`, step-size rules and Monte Carlo aggregation.
//! - [`ssl`]: generalized semi-supervised node classification.
//! - [`experiments`]: step-size sweeps, denoising and classification harnesses.
//! - [`io`]: signal, label and result file formats.

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod rsf;
pub mod ssl;

pub use error::{Error, Result};
pub use estimators::{
    exact_estimator_moments, gradient_step, resolve_alpha, run_monte_carlo, xbar_from_forest,
    AlphaResolution, AlphaStrategy, ExactMoments, MonteCarloAccumulator, MonteCarloResult,
};
pub use graph::{Graph, GraphModel, NodePositions};
pub use linalg::{
    apply_k_inverse, contraction_check, solve_exact_cg, solve_exact_dense, SmoothingProblem,
};
pub use rsf::{enumerate_forests, sample_forest, ForestDistribution, RootedForest};
pub use ssl::{ssl_exact, ssl_forest, ClassificationResult, SslProblem};
