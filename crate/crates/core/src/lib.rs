//! Instruction survival analysis, prompt compression experiments and
//! output-length statistics for compressed LLM prompts.

pub mod backends;
pub mod compression;
pub mod metrics;
pub mod prompt_structure;
pub mod report;
pub mod stats;
pub mod trial_engine;
