//! Lexical semantic change detection over precomputed contextual token
//! embeddings.
//!
//! Token clouds are loaded from on-disk stores ([`store`]), grouped into
//! sense clusters ([`cluster`]), compared through their nearest neighboring
//! words ([`similarity`], [`assignment`]) and classified as gained or lost
//! ([`detect`]). Cross-lingual comparison, graded ranking, graph export and
//! evaluation build on the same pieces.

pub mod assignment;
pub mod cluster;
pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod graph;
pub mod linalg;
pub mod ranking;
pub mod similarity;
pub mod store;
pub mod xlingual;

pub use error::{Error, Result};
