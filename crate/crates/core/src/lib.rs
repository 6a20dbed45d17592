pub mod cli;
pub mod evaluator;
pub mod llm;
pub mod orchestrator;
pub mod prompt;
pub mod repository;
pub mod rng;
pub mod space;
