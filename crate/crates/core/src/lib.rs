//! Tails of the maximal displacement of a catalytic branching random walk on
//! the integer lattice.
//!
//! Particles walk on `Z`; at catalyst sites they either branch or jump away.
//! The crate computes `P_z(M > x)`, where `M` is the rightmost site ever
//! visited, three independent ways:
//!
//! * [`solver`]: exact fixed-point equations over the catalysts,
//! * [`excursion`] / [`oracle`]: the excursion probabilities feeding them, by
//!   closed forms and by linear solves,
//! * [`monte_carlo`]: simulation of the branching skeleton,
//!
//! and compares them with the asymptotic laws in [`asymptotics`].

pub mod asymptotics;
pub mod criticality;
pub mod error;
pub mod excursion;
pub mod model;
pub mod monte_carlo;
pub mod oracle;
pub mod solver;
pub mod walk;

pub use criticality::{
    classify, criticality_matrix, perron_root, Catalyst, CatalystSet, OffspringDist, Regime,
    RegimeLabel,
};
pub use error::{CbrwError, Result};
pub use excursion::{ExcursionMatrix, ExcursionProbs};
pub use model::Model;
pub use solver::{tail_curve, CurveSource, TailCurve};
pub use walk::WalkSpec;
