//! Resource allocation for STAR-RIS-aided multi-carrier downlinks.
//!
//! The crate covers the whole chain from channel generation to the final
//! power/time/beamforming policy, for both orthogonal (TDMA within a
//! subchannel) and non-orthogonal (two-user SIC) access:
//!
//! - [`sysmodel`]: configuration, geometry, Rician channel sampling.
//! - [`starface`]: transmission/reflection coefficients and gains.
//! - [`matching`]: swap-stable channel assignment (general, LMA, SMA) and
//!   an exhaustive oracle.
//! - [`convexkit`]: water-filling, a dense log-barrier interior-point
//!   solver with Hermitian PSD blocks, a geometric-programming front end
//!   and Gaussian randomization.
//! - [`oma`]: alternating optimization of power/time and SCA beamforming.
//! - [`noma`]: decoding-order SDP, CUB beamforming iteration and GP power
//!   allocation.
//! - [`validate`]: solver-independent feasibility checks.
//! - [`harness`]: Monte-Carlo experiments and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod convexkit;
pub mod error;
pub mod harness;
pub mod matching;
pub mod noma;
pub mod oma;
pub mod seed;
pub mod starface;
pub mod sysmodel;
pub mod validate;

pub use error::{Error, Result};
pub use num_complex::Complex64;
