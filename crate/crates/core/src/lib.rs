//! Consensus dynamics in Wasserstein space.
//!
//! A population of agents each holds a probability measure on `R^d`. Every
//! round, agent `i` replaces its measure with the weighted W₂ barycenter of
//! its neighbours' measures, where neighbourhoods and weights come from a
//! time-varying row-stochastic matrix `W(t)`. This crate provides the
//! measure representations, transport solvers, barycenter solvers, graph
//! schedules and the round engine together with runtime checks of the
//! convergence theory (second-moment monotonicity, the Wasserstein Jensen
//! inequality, the meeting lemma for jointly connected schedules).

pub mod barycenter;
pub mod cli;
pub mod config;
pub mod consensus;
pub mod error;
pub mod linalg;
pub mod measures;
pub mod network;
pub mod trace;
pub mod transport;
pub mod verify;

pub use barycenter::{bar, BarycenterProblem};
pub use consensus::{ConsensusState, MetricsRecord, StopCriteria};
pub use error::{Error, Result};
pub use measures::{DiscreteMeasure, GaussianMeasure, Measure};
pub use network::GraphSchedule;
pub use transport::{SolverConfig, SolverMethod, TransportPlan};
