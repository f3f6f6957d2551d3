//! Numeral-aware rationale distillation toolkit for number-focused headline
//! generation.
//!
//! The crate covers the data side of the workflow: corpus preparation,
//! numeral parsing and operation inference, the four-section rationale
//! template, teacher supervision, preference-pair construction and
//! evaluation. LLM calls go through [`llm_gateway`], which has an HTTP
//! backend and a deterministic mock.

pub mod numeral;
pub mod corpus;
pub mod rationale;
pub mod llm_gateway;
pub mod eval;
pub mod distill;
pub mod prefs;
pub mod synthetic;

pub use rust_decimal::Decimal;
