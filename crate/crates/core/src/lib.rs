//! Toolkit for building and analysing an open information extraction corpus
//! from annotated sentences.
//!
//! The pipeline stages are exposed as separate modules:
//!
//! - [`ingest`] reads the interchange format, self-links first phrases and
//!   resolves redirects.
//! - [`spate`] attaches spatial and temporal annotations using dependency
//!   rules.
//! - [`postprocess`] drops mismatched "be" triples and repairs split links.
//! - [`confidence`] extracts features, trains and applies the logistic model.
//! - [`tier`] classifies triples into the clean and linked subcorpora.
//! - [`profile`] computes corpus statistics.
//! - [`kb`] aligns linked triples with knowledge-base facts.
//! - [`pipeline`] runs everything end to end.

pub mod confidence;
pub mod ingest;
pub mod kb;
pub mod pipeline;
pub mod postprocess;
pub mod profile;
pub mod sentence;
pub mod spate;
pub mod tier;
pub mod triple;

pub use ingest::{parse_document, Strictness};
pub use sentence::{AnnotatedSentence, DependencyGraph, TemporalExpression, Token, TokenIndex, WikiLink};
pub use triple::{ExtractionRecord, SpaTeAnnotation};
