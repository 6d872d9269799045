//! Abstract interpretation of ANF lambda calculus with store-allocated
//! continuations, a family of allocation policies, and an unbounded-stack
//! reference analysis to check them against.

pub mod alloc;
pub mod bench;
pub mod concrete;
pub mod domain;
pub mod fixpoint;
pub mod gen;
pub mod machine;
pub mod oracle;
pub mod syntax;

pub use alloc::{KontPolicy, PolicyPair, ValuePolicy};
pub use fixpoint::{analyze, analyze_with, AnalysisError, AnalysisResult};
pub use oracle::{oracle_analyze, precision_check, OracleResult};
pub use syntax::{parse_program, Program};
