//! Planning data from knowledge-graph patterns, a plan language with an
//! interpreter, and multi-answer QA benchmarks with gold answer sets.

pub mod bench;
pub mod dsl;
pub mod exec;
pub mod kg;
pub mod llm;
pub mod pattern;
pub mod plandata;
pub mod synth;
pub mod verbalize;
