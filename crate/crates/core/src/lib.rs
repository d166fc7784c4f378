//! Hybrid crowd and machine screening of items against multiple exclusion filters.
//!
//! Items are excluded when any filter applies. Machine classifiers are screened on
//! gold test items, pruned for correlation and folded into per-filter priors; crowd
//! votes are then bought one at a time where they reduce uncertainty the most.

pub mod bayes;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod io;
pub mod model;
pub mod scheduler;
pub mod sim;

pub use error::{Result, ScreenError};
pub use model::{
    ClassifierId, ClassifierProfile, FilterId, FilterLabel, GoldRecord, GoldSet, ItemId,
    LossParams, SourceKind, Verdict, Vote,
};
