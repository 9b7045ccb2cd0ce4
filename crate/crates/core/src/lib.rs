//! Core of the dual-path denoising lab.
//!
//! Everything here is pure computation over in-memory images and tensors;
//! file formats, timing and the command line live in the `dpl-lab` crate.
//! The crate builds without `std` (with `alloc`) when the default `std`
//! feature is disabled.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod classic;
pub mod dpl;
pub mod error;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod noise;
pub mod rng;

pub use error::{Error, Result};
pub use image::{gen_phantom, split_dataset, DatasetSplit, Image, PhantomSpec};
pub use rng::Rng;
