//! Intention-aligned distraction detection: clarification, scoring, the
//! notification engine, feedback refinement, and the offline benchmark.

pub mod bench;
pub mod clarifier;
pub mod detector;
pub mod domain;
pub mod engine;
pub mod eval;
pub mod gateway;
pub mod jsonl;
pub mod prompt;
pub mod refiner;
pub mod runner;
