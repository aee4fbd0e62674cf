//! Finite partitions, their sample distance, partition matchings along
//! orbits and the covering-number growth estimates.

mod dmu;
mod essential;
mod partition;
mod ratner;
mod transfer;

pub use dmu::{assignment_max, d_mu, d_mu_assignment, overlap_counts};
pub use essential::{essentialize, MAX_LEVEL, MIN_BOX_SAMPLES};
pub use partition::{grid_partition, perturbed_grid, CoordBox, Partition};
pub use ratner::{
    ball_member, beta_estimate, beta_from_counts, covering_number, covering_tracks, e_surrogates, ratner_gap,
    ratner_gap_tracks, ratner_matching, BetaCurve, Cover, ESurrogate, LabelTrack, UFunction, MIN_COVER_SAMPLE,
};
pub use transfer::{align_labels, transfer_matching, TransferResult};
