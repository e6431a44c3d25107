//! Relative pose recovery between the agent and goal cameras.

mod epnp;
mod ransac;
mod refine;

pub use epnp::epnp_solve;
pub use ransac::{ransac_pnp, PnpFailure, PnpResult, RansacConfig, SAMPLE_SIZE};
pub use refine::{refine_pose, Refinement, MAX_REFINE_ITERATIONS};
