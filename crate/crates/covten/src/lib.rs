//! Covariate-assisted sparse CP tensor completion.
//!
//! Recovers a low-rank tensor with sparse factor columns from a small
//! fraction of observed entries by jointly factorizing the observation
//! tensor and covariate matrices coupled along tensor modes. The solver is
//! a truncated, masked, coupled alternating least squares with a per-rank
//! refinement loop; spectral and tensor-power initialization, BIC-style
//! rank/sparsity tuning, and a reproducible synthetic-experiment harness
//! are included, along with plain-text file formats and a CLI.

pub mod cli;
pub mod error;
pub mod init;
pub mod io;
pub mod model;
pub mod rng;
pub mod sim;
pub mod solver;
pub mod tensor;
pub mod tune;

pub use error::{Error, Result};
pub use init::{initialize, InitConfig};
pub use model::{
    align, metrics, reconstruct, reconstruct_covariate, CoupledModel, CouplingSpec, CpFactors,
    Factor, MatrixFactor, MetricsReport,
};
pub use solver::{fit, fit_auto, objective, sweep, truncate, Dataset, FitResult, SolverConfig};
pub use sim::{gen_truth, run_experiment, RunConfig, Scenario};
pub use tensor::{
    dense_contract, masked_contract, masked_weight, project, Covariate, DenseMatrix, DenseTensor,
    Dims, ObservedTensor,
};
pub use tune::{bic, tune, TuneGrid, TuneOutcome};
