pub mod config;
pub mod episode;
pub mod error;
pub mod eval;
pub mod explorers;
pub mod geometry;
pub mod goal;
pub(crate) mod heap;
pub mod local_policy;
pub mod matcher;
pub mod pnp;
pub mod seeds;
pub mod sim;
pub mod switch;

pub use error::{Error, Result};
