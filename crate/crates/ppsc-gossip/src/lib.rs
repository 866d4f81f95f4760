//! Differentially private decentralized averaging, linear-equation solving
//! and convex optimization on top of a summation-consistent gossip shuffle.
//!
//! Nodes hold private vectors and talk over two graphs: a public one used for
//! ordinary averaging, and a private one on which they first run a few steps
//! of randomized, noise-blinded state exchange. The exchange conserves every
//! coordinate-wise sum exactly, so the network can still average correctly
//! afterwards — yet an eavesdropper who sees every message learns only a
//! noisy, heavily mixed view of the initial values.
//!
//! The crate is organized bottom-up:
//!
//! - [`rng`]: seed streams, Gaussian sampling, tail bounds and the noise
//!   multiplier that converts a privacy budget into a noise scale;
//! - [`graph`]: validated public (weighted, connected) and private
//!   (component-structured) communication graphs;
//! - [`ppsc`]: the shuffle itself, its transcripts and the mixing floor;
//! - [`planner`]: closed-form parameter selection (steps, noise, rounds) for
//!   a target accuracy and privacy budget;
//! - [`consensus`]: private averaging end to end;
//! - [`solver`]: the generic repeat-shuffle-average-update loop;
//! - [`linear_eq`]: cooperative solving of partitioned linear systems;
//! - [`optim`]: projected-gradient distributed optimization and the convex
//!   sets, step schedules and objective families it works over;
//! - [`audit`]: coverage and privacy accounting used to check runs after the
//!   fact;
//! - [`harness`]: config-file driven experiments behind the `ppsc-gossip`
//!   binary.

pub mod audit;
pub mod consensus;
pub mod graph;
pub mod harness;
pub mod linear_eq;
pub mod optim;
pub mod planner;
pub mod ppsc;
pub mod rng;
pub mod solver;

pub use graph::{GraphError, PrivateGraph, PublicGraph};
pub use planner::{Budget, Plan, PlannerError};
pub use ppsc::{MixingFloor, MixingMode, PpscConfig, PpscError, Transcript};
pub use rng::{RandomnessError, Seed};
