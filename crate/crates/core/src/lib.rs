//! Core analytics for exploring trees of compressed models: the model
//! store, metric analytics, map layout, selection comparison, behavior
//! comparison and layer diffs.

pub mod analytics;
pub mod behavior;
pub mod exec;
pub mod layers;
pub mod layout;
pub mod selection;
pub mod store;

pub use exec::Exec;
pub use store::{load_store, ModelStore, Operation, Scalar, StoreError};
