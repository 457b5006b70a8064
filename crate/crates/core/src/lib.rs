//! Monte Carlo laboratory for stochastic integration against a driving
//! Brownian motion.
//!
//! The crate is organized bottom-up:
//!
//! * [`grid`], [`paths`] and [`rng`]: seed-deterministic Brownian paths on
//!   nonuniform grids, left-endpoint Itô sums, quadratic variation and the
//!   `E min(|ξ|, 1)` metric.
//! * [`hitting`]: time-change clocks `h(r) = 1/(b-r) - 1/(b-a)`, exact and
//!   grid-coupled first-passage samplers, and the associated tail laws.
//! * [`tail`] and [`stats`]: heavy-tailed suprema, the product formula for
//!   their distribution and the statistical toolkit (KS, tail index).
//! * [`counterexample`]: a process whose scalar integrals all vanish while its
//!   vector `L²` norm diverges.
//! * [`dudley`]: terminal-value representations built from hitting-time
//!   blocks, plus the accumulating "universal" walk.
//! * [`weak_strong`]: two-sided moment and tail estimates, weak/strong
//!   identities and recovery of the driving noise from a martingale.

pub mod counterexample;
pub mod dudley;
pub mod error;
pub mod grid;
pub mod hitting;
pub mod paths;
pub mod quad;
pub mod rng;
pub mod stats;
pub mod tail;
pub mod weak_strong;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use paths::{BrownianPath, L0Metric, VectorPathValue};
pub use rng::StreamKey;
pub use stats::McEstimate;
