//! Text-to-ML orchestration engine.
//!
//! A textual task description goes in; a verified, assembled and tuned
//! program comes out. The crate is organised by pipeline stage:
//!
//! - [`task`]: task descriptions, search spaces, solutions and the
//!   optimization history shared by every other stage.
//! - [`llm`]: the text-generation backends (HTTP, scripted mock,
//!   record/replay) and conversation sessions.
//! - [`generation`]: test-gated iterative generation of program modules
//!   with self-reflection and attempt accounting.
//! - [`harness`]: testing protocols, data-contract plans, generated unit
//!   suites, synthetic data, the process sandbox, assembly and the
//!   post-assembly execution gate.
//! - [`search`]: random search and BOHB over module pathways and
//!   hyperparameters, the cost ledger and the end-to-end driver.
//! - [`zc`]: zero-cost proxy collection, rank aggregation and filtering.
//! - [`complexity`]: closed forms and Monte-Carlo estimates of the
//!   expected number of generations per valid output.
//! - [`report`] and [`cli`]: measurement reports and the command-line
//!   front door.

pub mod cli;
pub mod complexity;
pub mod generation;
pub mod harness;
pub mod llm;
pub mod report;
pub mod search;
pub mod task;
pub mod templates;
pub mod zc;

mod util;
