//! Discrete and continuous orbit matchings and the gap estimators built on
//! them.

mod bitmatrix;
mod cont;
mod discrete;
mod estimate;
mod flow;
pub(crate) mod grid;
mod lift;

pub use bitmatrix::BitMatrix;
pub use cont::{ContMatching, GridPiece};
pub use discrete::{
    compat_matrix, fbar_gap, fbar_limsup, max_matching, max_matching_bruteforce, max_matching_size, rho_fk,
    Matching,
};
pub use estimate::{tail_max, tail_min, GapEstimate};
pub use flow::{
    ftilde_gap, ftilde_limsup, rho_fk_flow, slope_constrained_matching, BISECTION_GRID, DEFAULT_FLOW_STEP,
    EPS_CEILING,
};
pub(crate) use flow::{gap_on_samples, GridSearch};
pub use lift::{lift_matching, Lift};
