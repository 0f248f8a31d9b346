//! Toolkit for re-executing machine-learning notebooks, grading their
//! submissions against a target score, reconstructing historical
//! environments, and driving an LLM repair loop until a notebook
//! reproduces its reported score.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`notebook`]: `.ipynb` model, cell-delimited text format, install
//!   directives, edit similarity and token counting.
//! - [`exec`]: executor backends (container and scripted mock) producing
//!   [`exec::ExecutionReport`]s.
//! - [`grader`]: submission validation, metrics, score deviation and the
//!   reproducibility taxonomy.
//! - [`backport`]: interpreter inference and historical version selection.
//! - [`llm`]: completion backends and token/cost accounting.
//! - [`agent`]: triage, prompt construction, response parsing and the
//!   modernization session loop.
//! - [`analytics`]: aggregation of session logs into report tables.

pub mod agent;
pub mod analytics;
pub mod backport;
pub mod exec;
pub mod grader;
pub mod llm;
pub mod notebook;

mod digest;

pub use digest::sha256_hex;
