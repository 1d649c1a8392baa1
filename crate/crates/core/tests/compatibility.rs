mod common;

use common::ShapesDomain;
use text2ml::generation::ModuleArtifact;
use text2ml::harness::{
    assemble_program, integration_gate, FpAccumulator, FpSummary, GateVerdict, Prewritten, ProgramConfig,
};
use text2ml::task::{Direction, ModuleKind};

const DP: [&str; 3] = ["dp_raw.py", "dp_minmax.py", "dp_center.py"];
const MODELS: [&str; 3] = ["model_logistic.py", "model_centroid.py", "model_rowsum.py"];
const PP: [&str; 3] = ["pp_argmax.py", "pp_threshold.py", "pp_margin.py"];

fn verify_all(domain: &ShapesDomain, kind: ModuleKind, files: &[&str]) -> Vec<ModuleArtifact> {
    files
        .iter()
        .map(|f| {
            let artifact = domain.verify(kind, f);
            assert!(artifact.verified);
            assert_eq!(artifact.attempts, 1, "{f}");
            artifact
        })
        .collect()
}

fn gate_config(domain: &ShapesDomain) -> ProgramConfig {
    let mut config = ProgramConfig::new(&domain.workspace, "accuracy", Direction::Maximize);
    config.hparams = serde_json::json!({"learning_rate": 0.5, "batch_size": 8});
    config
}

fn assemblies<'a>(
    dps: &'a [ModuleArtifact],
    models: &'a [ModuleArtifact],
    pps: &'a [ModuleArtifact],
) -> impl Iterator<Item = [ModuleArtifact; 3]> + 'a {
    dps.iter().flat_map(move |d| {
        models
            .iter()
            .flat_map(move |m| pps.iter().map(move |p| [d.clone(), m.clone(), p.clone()]))
    })
}

#[test]
fn nine_verifications_cover_twenty_seven_programs() {
    twenty_seven_from_nine();
}

#[test]
fn injected_size_mismatch_is_caught_by_the_gate() {
    injected_mismatch_is_caught();
}

/// Returns (verifications, valid assemblies).
pub fn twenty_seven_from_nine() -> (usize, usize) {
    let domain = ShapesDomain::new();
    let dps = verify_all(&domain, ModuleKind::DataPreparation, &DP);
    let models = verify_all(&domain, ModuleKind::Modeling, &MODELS);
    let pps = verify_all(&domain, ModuleKind::PostProcessing, &PP);
    let verifications = domain.sandbox.runs();
    assert_eq!(verifications, 9);

    let config = gate_config(&domain);
    let mut valid = 0;
    for arts in assemblies(&dps, &models, &pps) {
        let program = assemble_program(&arts, &domain.plan, &Prewritten::default()).unwrap();
        match integration_gate(&program, &domain.runner, &config).unwrap() {
            GateVerdict::Valid { score } => {
                assert!((0.0..=1.0).contains(&score));
                valid += 1;
            }
            GateVerdict::FalsePositive { reason } => panic!("{}: {reason}", program.pathway()),
        }
    }
    assert_eq!(valid, 27);
    // No module was regenerated or re-verified for any pairing.
    assert_eq!(domain.sandbox.runs(), 9 + 27);
    // Without cross-pairing the same 9 verifications yield only M whole
    // programs; with it, M^N. Programs per verification grow by M^(N-1).
    let (m, n) = (3usize, 3u32);
    let without_pairing = verifications / n as usize;
    assert_eq!(without_pairing, m);
    assert_eq!(valid / without_pairing, m.pow(n - 1));
    (verifications, valid)
}

/// Returns the FP summary after the second, longer evaluation.
pub fn injected_mismatch_is_caught() -> FpSummary {
    let domain = ShapesDomain::new();
    let mut dp_files = DP.to_vec();
    dp_files.push("dp_upsample.py");
    let mut model_files = MODELS.to_vec();
    model_files.push("model_flat16.py");
    // Each half of the bad pair passes its own unit tests.
    let dps = verify_all(&domain, ModuleKind::DataPreparation, &dp_files);
    let models = verify_all(&domain, ModuleKind::Modeling, &model_files);
    let pps = verify_all(&domain, ModuleKind::PostProcessing, &PP);

    let config = gate_config(&domain);
    let mut fp = FpAccumulator::default();
    let mut passed = Vec::new();
    let mut rejected = Vec::new();
    for arts in assemblies(&dps, &models, &pps) {
        let program = assemble_program(&arts, &domain.plan, &Prewritten::default()).unwrap();
        let verdict = integration_gate(&program, &domain.runner, &config).unwrap();
        fp.record_gate(&program.pathway(), &verdict);
        match verdict {
            GateVerdict::Valid { .. } => passed.push(program),
            GateVerdict::FalsePositive { reason } => rejected.push((program.pathway(), reason)),
        }
    }
    assert_eq!(rejected.len(), 3, "{rejected:?}");
    for (pathway, reason) in &rejected {
        assert!(pathway.starts_with("dp_upsample>model_flat16>"), "{pathway}");
        assert!(reason.contains("expected 16 features"), "{reason}");
    }

    // Full evaluation of everything the gate let through.
    let mut full = config.clone();
    full.epochs = 3;
    full.seed = 1;
    for program in &passed {
        if let GateVerdict::FalsePositive { reason } = integration_gate(program, &domain.runner, &full).unwrap() {
            fp.record_evaluation_failure(&program.pathway(), &reason);
        }
    }
    let summary = fp.summary();
    assert_eq!(summary.verified, 48);
    assert_eq!(summary.gate_rejected, 3);
    assert_eq!(summary.failed_after_gate, 0);
    assert_eq!(summary.rate_before, Some(3.0 / 48.0));
    assert_eq!(summary.rate_after, Some(0.0));
    summary
}

#[test]
fn failing_modules_get_phase_tagged_feedback() {
    use text2ml::generation::{ContextualEvaluator, FeedbackPhase};
    use text2ml::harness::make_contextual_evaluator;

    let domain = ShapesDomain::new();
    let evaluator = make_contextual_evaluator(
        ModuleKind::Modeling,
        &domain.plan,
        &domain.suite,
        &domain.synthetic,
        None,
        serde_json::json!({}),
        domain.runner.clone(),
    )
    .unwrap();
    let syntax = evaluator.evaluate(ModuleKind::Modeling, "def build_model(:\n").unwrap();
    assert_eq!(syntax.phase, FeedbackPhase::Syntax);
    assert_eq!(domain.sandbox.runs(), 3, "a failing module is tried on every dataset");

    let wrong_width = "class M:\n    def forward(self, inputs):\n        return [[1.0, 0.0, 0.0] for _ in inputs[0]]\n    def train_step(self, i, o, h):\n        return 0.0\n\ndef build_model(plan, hparams):\n    return M()\n";
    let contract = evaluator.evaluate(ModuleKind::Modeling, wrong_width).unwrap();
    assert_eq!(contract.phase, FeedbackPhase::Contract);
    assert!(contract.diagnostics.contains("predictions.dim[1].size"), "{}", contract.diagnostics);

    let raises = "def build_model(plan, hparams):\n    raise RuntimeError('boom')\n";
    let execution = evaluator.evaluate(ModuleKind::Modeling, raises).unwrap();
    assert_eq!(execution.phase, FeedbackPhase::Execution);
    assert!(execution.diagnostics.contains("boom"));

    let before = domain.sandbox.runs();
    let ok = evaluator.evaluate(ModuleKind::Modeling, &common::fixture("shapes", "model_logistic.py")).unwrap();
    assert!(ok.passed);
    assert_eq!(domain.sandbox.runs() - before, 1, "passes on the first dataset");
}
