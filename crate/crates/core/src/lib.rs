//! Tool documentation ingest, instruction generation, retrieval, a
//! plan/retrieve/select/execute agent loop, and evaluation metrics.

pub mod agent;
pub mod eval;
pub mod ingest;
pub mod instruct;
pub mod json_block;
pub mod prompts;
pub mod provider;
pub mod retrieval;
pub mod tokens;
