//! Discrete Holst gravity on a periodic 3-torus boundary.
//!
//! The crate is `no_std` with `alloc` when the default `std` feature is off.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod algebra;
pub mod constraints;
pub mod eh;
pub mod error;
pub mod exact;
pub mod grid;
pub mod halfshell;
pub mod reduction;
pub mod rng;
pub mod wedge;

pub use error::{Error, Result};
