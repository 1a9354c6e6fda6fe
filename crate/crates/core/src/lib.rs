//! Simulation library for three-tier cloud-edge-device collaborative DNN
//! inference over ISAC (integrated sensing and communication) links.
//!
//! Multi-antenna devices sense their environment and classify the sensed
//! scene with a pre-trained DNN. Each device executes an early segment of
//! the network locally, offloads intermediate features to a MEC server over
//! a MIMO uplink that simultaneously carries a radar waveform, and leaves
//! the tail of the network to a cloud server behind a rate-limited backhaul.
//! The library minimizes the total inference latency over
//!
//! * the per-device DNN partition points `(l1, l2)`,
//! * the MEC and local CPU frequency allocations (closed forms from the
//!   KKT conditions), and
//! * the ISAC transmit beamformers under a beampattern-matching covariance
//!   equality constraint (majorization-minimization around a WMMSE block
//!   coordinate descent with an orthogonal-Procrustes closed form),
//!
//! with a cross-entropy search over the discrete partition decisions and an
//! exhaustive oracle plus three benchmark schemes for validation.
//!
//! The [`harness`] module provides seeded Monte-Carlo trial execution,
//! parameter sweeps, and CSV/JSON result emission; the `iscc-sim` binary in
//! the companion CLI crate wraps it.

pub mod baselines;
pub mod beamforming;
pub mod beampattern;
pub mod ce_optimizer;
pub mod cost_model;
pub mod dnn_profile;
pub mod error;
pub mod harness;
pub mod inner_solver;
pub mod linalg;
pub mod radio;
pub mod resource_alloc;
pub mod seed;

pub use error::{Error, Result};
