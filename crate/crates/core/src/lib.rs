//! Active learning for cost-sensitive classification.
//!
//! The learner keeps a tree of dyadic cells over `[0,1]^d`. Each cell holds
//! per-label confidence bounds on the expected cost; labels are eliminated
//! once provably suboptimal on the whole cell, and cells are split when the
//! sampling noise falls below the smoothness bias.

// Negated comparisons are how parameter checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod confidence;
pub mod error;
pub mod evaluation;
pub mod invariants;
pub mod label;
pub mod learner;
pub mod partition;
pub mod problems;

pub use confidence::{BoundParams, ConfidenceRecord, ExtReal, LabelBounds};
pub use error::{Error, Result};
pub use label::Label;
pub use learner::{ActiveClassifier, Classifier, Learner, StepEvent, Termination};
pub use partition::{Cell, PartitionGeometry};
pub use problems::{NoiseModel, Problem, ProblemSpec};
