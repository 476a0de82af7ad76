//! E-commerce instruction-corpus construction and evaluation.
//!
//! The pipeline runs ingest → formulate → expand → curate; [`lora`] holds the
//! low-rank adapter mathematics and [`eval`] the metric suite with its
//! geometric-mean aggregate.

pub mod curate;
pub mod eval;
pub mod expand;
pub mod formulate;
pub mod ingest;
pub mod lora;
pub mod modelio;
pub mod sampling;
pub mod taxonomy;
pub mod text;
pub mod types;

pub use formulate::{InstructionPair, Origin, Provenance, Strategy};
pub use taxonomy::{normalize_label, Label, TaxonomyLabel};
pub use text::{clean_text, tokenize};
pub use types::{Action, ObjectFeature, ProductRecord, TaskKind};
