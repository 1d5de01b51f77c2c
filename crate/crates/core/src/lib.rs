//! Instant search over an entertainment catalog.
//!
//! Every keystroke runs the same pipeline over an immutable [`EngineSnapshot`]:
//! prefix matching, facet detection, behavioral recommendations in the query
//! context, logistic blending, and organization into labeled rows.

pub mod behavior;
pub mod catalog;
pub mod engine;
pub mod eval;
pub mod facet;
pub mod index;
pub mod organizer;
pub mod ranker;
pub mod sim;

pub use catalog::{Catalog, EntityId};
pub use engine::{EngineConfig, EngineSnapshot, Policy, SearchResponse, Sources};
