//! Bounded-ability adaptive item selection.
//!
//! All gradients here are taken with respect to the student's ability row
//! only; item parameters and the MLP stay frozen during a session.
//!
//! - [`expected_model_change`] scores how far one answer to an item is
//!   expected to move the ability estimate.
//! - [`weight_matrix`] estimates pairwise item similarity from the distance
//!   between their loss gradients.
//! - [`info_score`] and [`marginal_gain`] are the coverage objective and its
//!   increment, maximised greedily by [`SelectionState::select_next`].

mod emc;
mod filter;
mod gain;
mod state;
mod weights;

pub use emc::{
    ability_gradient, emc_from_norms, expected_model_change, probe, update_ability, AbilityProbe,
};
pub use filter::filter_candidates;
pub use gain::{info_score, marginal_gain, Coverage};
pub use state::{recommend, SelectionConfig, SelectionState, StepScore};
pub use weights::{weight_matrix, WeightMatrix};
