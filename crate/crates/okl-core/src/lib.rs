//! Multi-task learning with a learned output kernel.
//!
//! Tasks share a scalar input kernel `k`; their pairwise relationships are
//! captured by a `T x T` positive semidefinite output kernel `Theta` that is
//! learned jointly with the per-task predictors. Training maximizes an
//! unconstrained dual by stochastic dual coordinate ascent; `Theta` is then
//! recovered in closed form from the dual variables, so no eigendecomposition
//! is ever needed on the training path.
//!
//! Module map:
//! - [`dataio`]: dataset / Gram-matrix parsing, synthetic data generation
//! - [`kernels`]: scalar input kernels (linear, RBF, precomputed)
//! - [`losses`]: hinge, squared and epsilon-insensitive losses with conjugates
//! - [`regularizers`]: the output-kernel penalty family and the analytic
//!   `Theta` recovery map
//! - [`solver`]: the coordinate-ascent trainer
//! - [`model`]: trained artifacts, prediction, serialization, `Theta` export
//! - [`evalcv`]: metrics and cross-validation
//! - [`oracle`]: slow reference solvers used for verification
//! - [`mod@bench`]: time-to-target comparison harness

// index-based loops dominate the dense linear algebra here, and the negated
// comparisons on floats are deliberate NaN guards
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cubic;
pub mod dataio;
pub mod evalcv;
pub mod kernels;
pub mod losses;
pub mod mat;
pub mod model;
pub mod oracle;
pub mod regularizers;
pub mod solver;

pub use dataio::{GramMatrix, MultiTaskDataset};
pub use kernels::KernelSpec;
pub use losses::LossSpec;
pub use model::{Model, OutputKernel};
pub use regularizers::{RegKind, RegularizerSpec};
pub use solver::{fit, Sampling, SolverConfig, SubproblemMode};
