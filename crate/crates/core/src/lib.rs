#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bellman;
pub mod cli;
pub mod constraints;
pub mod error;
pub mod fixtures;
pub mod gfun;
pub mod linalg;
pub mod model;
pub mod verify;

pub use error::{Error, Result};
