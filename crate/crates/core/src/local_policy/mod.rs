//! Egocentric occupancy mapping, fast marching and action selection toward
//! an estimated goal.

pub mod fmm;
pub mod grid;
pub mod policy;

pub use fmm::{fast_marching, DistanceField};
pub use grid::{build_local_map, Cell, GridParams, OccupancyGrid};
pub use policy::{act_on_estimate, plan, select_action, steer, DiscreteAction, LocalPlan, PolicyParams};
