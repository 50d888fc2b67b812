//! Link-level simulation of delay-Doppler (OTFS) transmission with
//! iterative Bayesian symbol detection.
//!
//! The crate covers the full chain: QAM mapping onto a delay-Doppler grid,
//! the unitary transforms to and from the time domain, doubly dispersive
//! multipath channels with integer delay/Doppler taps, and three detectors
//! over the equivalent real-valued linear model:
//!
//! * a classical MMSE estimator,
//! * MMSE followed by Bayesian parallel interference cancellation (BPIC),
//! * an untrained decoder network fitted per frame (deep-image-prior style)
//!   whose output seeds the same BPIC loop.
//!
//! [`sim`] wraps everything in a reproducible Monte Carlo harness that
//! reports symbol error rates, stopping-iteration statistics, and
//! complexity estimates.

pub mod bpic;
pub mod channel;
pub mod config;
pub mod dd_frame;
pub mod ddip;
pub mod error;
pub mod linalg;
pub mod sim;

pub use error::{Error, Result};
