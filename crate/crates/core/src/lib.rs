//! Exact and Monte Carlo computations for skew products
//! `F(x,y) = (f(x), G_{tau(x)} y)` over subshifts of finite type.

pub mod cocycle;
pub mod correlations;
pub mod dist;
pub mod error;
pub mod fit;
pub mod lattice;
pub mod mc;
pub mod par;
pub mod partitions;
pub mod rng;
pub mod scenarios;
pub mod sft;
pub mod skew;
pub mod torus;

pub use error::{Error, Result};
pub use par::Workers;
