//! Guaranteed output ranges for feedforward ReLU networks over polyhedral
//! input sets.
//!
//! The range of one output is bracketed to a tolerance `δ` by alternating a
//! local search (LP steps inside activation regions) with a global search
//! (big-M MILP feasibility over the activation binaries). See [`search`] for
//! the loop, [`oracle`] for exhaustive reference ranges on small networks and
//! [`bench`] for the random-network harness.

pub mod bench;
pub mod error;
pub mod lp;
pub mod milp;
pub mod network;
pub mod oracle;
pub mod polytope;
pub mod search;

pub use error::{Error, Result};
pub use lp::{LinearProgram, LpOutcome, LpSolver, LpStatus, Simplex};
pub use milp::{encode_network, estimate_big_m, solve_feasibility, FeasibilityVerdict, MilpProblem, ThresholdSense};
pub use network::{load_network, save_network, ActivationPattern, AffineMap, Layer, Network};
pub use polytope::Polyhedron;
pub use search::{
    adversarial_search, certify_label, estimate_range, find_lower_bound, find_upper_bound, Certification,
    RangeResult, SearchParams, SearchStatus,
};
