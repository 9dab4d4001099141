//! Likelihood-free inference for a deterministic SEIR epidemic model.
//!
//! The crate covers the whole pipeline: RK4 integration of the ODE system,
//! an observation-noise layer, a catalog of eight summary statistics,
//! rejection ABC, entropy/RMSE summary selection, a Gaussian synthetic
//! likelihood, random-walk Metropolis and Hamiltonian Monte Carlo samplers,
//! and convergence diagnostics.

// `!(x > 0.0)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abc;
pub mod diagnostics;
pub mod entropy;
mod error;
pub mod io;
pub mod observe;
pub mod ode;
pub mod samplers;
pub mod seed;
pub mod selection;
pub mod summaries;
pub mod synlik;

pub use abc::{rejection_abc, simulate_reference, AcceptedSample, PriorSpec, ReferenceTable, Scenario};
pub use diagnostics::{ess, split_rhat, summarize, PosteriorSummary};
pub use entropy::{knn_entropy, EntropyEstimate};
pub use error::{Error, Result};
pub use observe::{observe, NoiseModel, ObservedSeries};
pub use ode::{integrate_seir, InitialState, ParameterVector, TimeGrid, Trajectory};
pub use samplers::{
    hmc, make_target, run_chains, rwmh, Chain, ChainConfig, HmcConfig, InitStrategy, RwmhConfig, SamplerKind,
    SeirTarget, TargetDensity,
};
pub use selection::{select_subset, SelectionConfig, SelectionReport, SubsetScore};
pub use summaries::{compute_summary, compute_vector, SubsetMask, SummaryId, SummaryVector};
pub use synlik::{estimate_moments, synthetic_loglik, SynLikModel, SynLikTarget};
