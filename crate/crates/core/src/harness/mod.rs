//! Constrained generative unit testing.
//!
//! A progenitor protocol constrains the data-contract plan the backend
//! devises; the plan yields per-module unit tests and the validity test for
//! synthetic datasets; modules are then checked in a sandbox, assembled
//! mechanically, and run end to end through the integration gate.

mod assembly;
mod evaluator;
mod gate;
mod plan;
mod protocol;
mod runner;
pub mod sandbox;
mod suite;
mod synthetic;

pub use assembly::{assemble_program, AssemblyError, Prewritten, ProgramAssembly, ENTRY_SCRIPT};
pub use evaluator::{make_contextual_evaluator, EvaluatorSetupError, ModuleEvaluator};
pub use gate::{
    integration_gate, summarize, FpAccumulator, FpEntry, FpStage, FpSummary, GateVerdict,
};
pub use plan::{
    devise_plan, verify_plan, DataContractPlan, DimRef, DimSpec, Dtype, PlanError, PlanViolation,
    TensorSpec, DEFAULT_PLAN_ROUNDS,
};
pub use protocol::{Detail, PerSide, ProgenitorProtocol, ProtocolError, RequiredAxis, Side};
pub use runner::{
    reference_hparams, CheckJob, CheckOutcome, ProgramConfig, ProgramOutcome, ProgramResult,
    Runner, CHECK_MODULE_PY, HARNESS_PY, MAIN_PY,
};
pub use sandbox::{
    ExitState, FakeSandbox, ProcessSandbox, Sandbox, SandboxError, SandboxReport, SandboxRequest,
};
pub use suite::{build_unit_tests, AxisRef, Check, CheckKind, TensorRef, UnitTestSuite, View, TEST_BATCH};
pub use synthetic::{
    generate_synthetic_data, SyntheticDataProgram, SyntheticError, DEFAULT_SYNTHETIC_ATTEMPTS,
    DEFAULT_SYNTHETIC_PROGRAMS,
};
