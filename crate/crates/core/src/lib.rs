//! Input/output reduced-order modeling.
//!
//! Sample a parameterized model on a sparse grid, PCA-reduce the outputs,
//! fit a Legendre polynomial-chaos surrogate over the reduced outputs, and
//! pseudoinvert its Jacobian to get one input direction per retained output
//! axis. Those directions turn output targets into input plans directly.

pub mod artifact;
pub mod config;
pub mod error;
pub mod gpce;
pub mod model;
pub mod pipeline;
pub mod reduction;
mod rowmajor;
pub mod sparsegrid;

pub use config::WorkflowConfig;
pub use error::{Error, Result};
pub use gpce::{MultiIndexSet, Surrogate};
pub use model::{ModelRunner, ParameterSpace, SyntheticModel};
pub use pipeline::{build_rom, plan_for_target, verify_directions, PlanResult, ReducedRom, RomSettings};
pub use reduction::{PcaBasis, SnapshotMatrix, Standardization};
pub use sparsegrid::SparseGrid;
