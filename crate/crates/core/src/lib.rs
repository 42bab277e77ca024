//! Relation extraction over standoff-annotated clinical text.
//!
//! The pipeline classifies relations between pre-annotated concept pairs:
//! parse standoff documents into sentence-segmented [`corpus::Document`]s,
//! generate schema-filtered [`candidates::CandidatePair`]s, encode each pair
//! as a two-sentence token sequence with entity markers, train a relation
//! classifier over a pluggable contextual encoder, and score predictions
//! with strict micro-averaged precision/recall/F1.

pub mod candidates;
pub mod corpus;
pub mod encoding;
pub mod evaluation;
pub mod inference;
pub mod model;
pub mod schema;
