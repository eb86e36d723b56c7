//! Hybrid particle-in-cell simulation of free-surface fluid interacting with
//! absorbent fabric on a staggered grid.

pub mod diagnostics;
pub mod error;
pub mod fabric;
pub mod gridsolver;
pub mod kernels;
pub mod linalg;
pub mod output;
pub mod simloop;
pub mod state;
pub mod transfers;
pub mod verify;

pub use error::{Error, Result};
