//! Closed-loop personalized learning engine.
//!
//! The crate is organised around the three stages of the loop:
//!
//! - [`data`]: ingest raw response logs into canonical CSV files, build the
//!   item/knowledge Q-matrix and the prerequisite graph, split per student.
//! - [`ncd`]: the neural cognitive diagnosis model. Knowledge-aligned ability
//!   and difficulty embeddings, a monotone MLP predictor trained by SGD, and
//!   the per-knowledge mastery table.
//! - [`becat`]: bounded-ability adaptive item selection. Expected model
//!   change, the gradient-distance weight matrix and greedy coverage gain.
//! - [`feedback`]: prompt assembly, chat-completion client and the
//!   deterministic offline fallback report.
//! - [`simulate`]: offline policy comparison over held-out students.
//!
//! Data-parallel loops (batch gradients, weight-matrix rows, per-student
//! simulation) go through [`par`], which uses rayon when the `parallel`
//! feature is on and plain iterators otherwise. Results are identical in
//! both modes.

pub mod becat;
pub mod data;
pub mod error;
pub mod feedback;
pub mod ncd;
pub mod par;
pub mod simulate;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
