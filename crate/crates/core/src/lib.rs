//! Explanation refinement with a generator and a critic model.
//!
//! A generator writes an explanation for a task instance; a critic judges
//! it, gives feedback and proposes a better version; the generator then
//! rewrites its explanation using both. The crate also runs the
//! single-model self-refinement baseline and ablations that withhold the
//! feedback or the suggestion, and ships the analysis tools used to study
//! the outputs.
//!
//! Modules in pipeline order:
//!
//! - [`corpus`]: dataset loading and prompt input rendering
//! - [`prompting`]: stage templates and few-shot demonstrations
//! - [`backend`]: chat-completion clients, scripted test doubles
//! - [`refinery`]: the pipelines and their traces
//! - [`metrics`]: embeddings and the external scorer client
//! - [`analysis`]: filters, language statistics, similarity, agreement
//! - [`experiment`]: config-driven batch runs

pub mod analysis;
pub mod backend;
pub mod corpus;
pub mod experiment;
pub mod metrics;
pub mod prompting;
pub mod refinery;
