//! Bouncy Hamiltonian dynamics and its relatives: a rejection-free sampler
//! that follows a cheap surrogate flow and corrects for the target through
//! an auxiliary inertia variable, reflecting the velocity whenever the
//! inertia runs out.

pub mod bps;
pub mod chain;
pub mod convergence;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod hbps;
pub mod integrator;
pub mod line;
pub mod nuts;
pub mod local;
pub mod rng;
pub mod roots;
pub mod surrogates;
pub mod targets;
pub mod vecops;

pub use chain::{Chain, EventCounts};
pub use dynamics::{reflect, AugmentedState, BounceMethod, BouncyDynamics, BouncySampler, EventKind, EventRecord, Trajectory};
pub use error::{Error, Result};
pub use roots::SolverConfig;
pub use surrogates::{HarmonicFlow, LinearFlow, SurrogateFlow};
pub use targets::Target;
