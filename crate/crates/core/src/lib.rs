//! Core algorithms for a type-aware differential fuzzer for SMT solvers:
//! lossless SMT-LIB tokenization, operator-occurrence indexing, a subtype
//! lattice over operator signatures, semantics-preserving operator
//! mutation, subprocess solver execution with verdict scanning, the
//! differential oracle and bug taxonomy, trigger de-duplication and
//! persistence, a structural reducer, and trace similarity analysis.

pub mod dedup;
pub mod mutator;
pub mod oracle;
pub mod reducer;
pub mod runner;
pub mod smtlib;
pub mod tracesim;
pub mod typing;

pub use dedup::{BugTrigger, TriggerStore};
pub use mutator::{fuzz_walk, type_aware_mutate, ChoiceSource, MutantChain, RandomChoices, ScriptedChoices};
pub use oracle::{classify, validate, BugKind, Culprit};
pub use runner::{run_solver, SolverOutcome, SolverSpec, Verdict};
pub use smtlib::{FormulaDocument, OperatorOccurrence};
pub use tracesim::{sim, Trace};
pub use typing::{OperatorSignature, SignatureTable, TypeTerm};
