pub mod corpus;
pub mod java;
pub mod source;
pub mod llm;
pub mod harness;
pub mod evalstats;
pub mod estimator;
pub mod pipeline;
