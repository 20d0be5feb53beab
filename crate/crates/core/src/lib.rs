#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod ensemble;
pub mod fast;
pub mod error;
pub mod povm;
pub mod jsvd;
pub mod mixed;
pub mod projectors;
pub mod reference;
pub mod strobe;
pub mod vbasis;

pub use error::{Error, Result};
