//! Zero-field control of NV-center ensembles in single-crystal diamond.
//!
//! The crate covers the whole numerical pipeline: spin-1 and pseudo spin-1/2
//! operators, lab→NV frame rotations for the four bond orientations, the
//! microstrip field model, ensemble Hamiltonians in the rotating frame,
//! piecewise-constant propagation with the simulated experiments built on it,
//! and a GRAPE optimizer over incoherent ensembles.
//!
//! Internal frequencies are angular, in rad/µs. Times are in µs unless a name
//! says otherwise (`dt_ns`). Conversions live in [`units`].
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is enabled.
//! The `parallel` feature evaluates ensemble members on a rayon pool; results
//! are bit-identical to the serial path.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod error;
pub mod fields;
pub mod geometry;
pub mod grape;
pub mod hamiltonian;
pub mod linalg;
pub mod propagate;
pub mod rwa;
pub mod spectral;
pub mod spin;
pub mod units;

mod par;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
