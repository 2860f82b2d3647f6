//! Regression run over the shipped scenario corpus: every document runs on
//! both engines and the per-outcome gap stays below 1e-9.

use qchain_core::scenario::{parse_scenario, run_with, EngineDecl, ReportResult};

#[test]
fn corpus_runs_clean_on_both_engines() {
    let corpus_dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus");
    let mut files: Vec<_> = std::fs::read_dir(corpus_dir)
        .expect("corpus directory")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    assert!(files.len() >= 20, "expected at least 20 corpus files");

    for path in &files {
        let text = std::fs::read_to_string(path).expect("readable corpus file");
        let doc = parse_scenario(&text).unwrap_or_else(|e| panic!("{path:?}: {e}"));
        let report = run_with(&doc, Some(EngineDecl::Both), None)
            .unwrap_or_else(|e| panic!("{path:?}: {e}"));
        match &report.result {
            ReportResult::Distribution {
                total_probability,
                max_engine_difference,
                ..
            } => {
                assert!(
                    (total_probability - 1.0).abs() < 1e-9,
                    "{path:?}: total probability {total_probability}"
                );
                let diff = max_engine_difference.expect("both engines ran");
                assert!(diff < 1e-9, "{path:?}: engine difference {diff:.3e}");
            }
            ReportResult::Probability { difference, .. } => {
                let diff = difference.expect("both engines ran");
                assert!(diff < 1e-9, "{path:?}: engine difference {diff:.3e}");
            }
            other => panic!("{path:?}: unexpected report kind {other:?}"),
        }
    }
}

#[test]
fn two_observer_corpus_document_reproduces_registered_statistics() {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../corpus/13_two_observer_composite.json"
    );
    let doc = parse_scenario(&std::fs::read_to_string(path).expect("fixture")).expect("parses");
    let report = run_with(&doc, Some(EngineDecl::Both), None).expect("runs");
    let ReportResult::Distribution { rows, .. } = &report.result else {
        panic!("expected a distribution");
    };
    let p = |f_label: &str, w_label: &str| {
        rows.iter()
            .find(|r| r.outcome == vec![f_label.to_string(), w_label.to_string()])
            .map(|r| r.probability)
            .unwrap_or(0.0)
    };
    // Equal branch weights and a balanced first evolution: every agreeing
    // pair of readings carries probability 1/4, nothing else fires.
    for (f, w) in [("yes", "yes"), ("yes", "no"), ("no", "yes"), ("no", "no")] {
        assert!((p(f, w) - 0.25).abs() < 1e-12, "P({f},{w}) = {}", p(f, w));
    }
    assert!(p("yes", "not_sure").abs() < 1e-12);
    assert!(p("unset", "unset").abs() < 1e-12);
}
