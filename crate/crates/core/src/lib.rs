//! Knowledge-grounded response generation for movie chit-chat.
//!
//! The pipeline collects conversation-relevant attributes and entities from a
//! movie knowledge base, encodes the context with attribute attention, and
//! decodes with a pointer gate that copies candidate entities.

pub mod collector;
pub mod embed;
pub mod error;
pub mod kb;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
