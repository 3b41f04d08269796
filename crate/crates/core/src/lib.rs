//! Simulation and analysis of over-the-air federated learning where users
//! mask their gradients with pairwise cancellable artificial noise.
//!
//! - [`channel`]: Rayleigh fading for the server and eavesdropper links.
//! - [`pcran`]: pairing, pair secrets, power split and noise statistics.
//! - [`aircomp`]: transmit frames, superposition and the server estimate.
//! - [`fl`]: federated gradient descent and its convergence bound.
//! - [`secrecy`]: secrecy capacity and its Monte Carlo sweep.
//! - [`experiment`]: JSON configs, experiment runners and CSV output.

pub mod aircomp;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod fl;
pub mod pcran;
pub mod rng;
pub mod secrecy;

pub use error::{Error, Result};
