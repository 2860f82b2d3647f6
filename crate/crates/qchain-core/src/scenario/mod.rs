//! Declarative scenario files: a JSON document naming the tensor factors,
//! the prepared state, a time-ordered event list, and a query, plus the
//! parser/validator and the runner binding the engines together.
//!
//! Complex numbers are `[re, im]` pairs and matrices are row-major. Events
//! at equal times must carry distinct `seq` indices; ordering is by
//! `(time, seq)`. Every error carries a machine-readable code and a JSON
//! path for context.

mod emit;
mod run;

pub use emit::{
    emit, BuiltinRow, DistributionRow, FamilyReport, OutputFormat, Report, ReportResult,
};
pub use run::{
    check_histories, compile, run, run_builtin, run_with, CompiledScenario, BUILTIN_NAMES,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Machine-readable error categories; each maps onto a process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Syntax,
    UnsupportedVersion,
    DuplicateLabel,
    UnknownLabel,
    BadFactor,
    CapacityExceeded,
    BadMatrixShape,
    NonUnitaryMatrix,
    BadObservable,
    IncompletePartition,
    BadCoupling,
    ReverseWithoutCouple,
    TimeCollision,
    BadInitialState,
    BadQuery,
    MissingProjectorFamilies,
    NumericalInvariant,
    Io,
    Internal,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Syntax => "syntax",
            Self::UnsupportedVersion => "unsupported_version",
            Self::DuplicateLabel => "duplicate_label",
            Self::UnknownLabel => "unknown_label",
            Self::BadFactor => "bad_factor",
            Self::CapacityExceeded => "capacity_exceeded",
            Self::BadMatrixShape => "bad_matrix_shape",
            Self::NonUnitaryMatrix => "non_unitary_matrix",
            Self::BadObservable => "bad_observable",
            Self::IncompletePartition => "incomplete_partition",
            Self::BadCoupling => "bad_coupling",
            Self::ReverseWithoutCouple => "reverse_without_couple",
            Self::TimeCollision => "time_collision",
            Self::BadInitialState => "bad_initial_state",
            Self::BadQuery => "bad_query",
            Self::MissingProjectorFamilies => "missing_projector_families",
            Self::NumericalInvariant => "numerical_invariant",
            Self::Io => "io",
            Self::Internal => "internal",
        }
    }

    /// Process exit status: 2 validation, 3 capacity, 4 numerical invariant.
    pub fn exit_code(self) -> i32 {
        match self {
            Self::CapacityExceeded => 3,
            Self::NumericalInvariant => 4,
            _ => 2,
        }
    }

    pub const ALL: [ErrorCode; 19] = [
        Self::Syntax,
        Self::UnsupportedVersion,
        Self::DuplicateLabel,
        Self::UnknownLabel,
        Self::BadFactor,
        Self::CapacityExceeded,
        Self::BadMatrixShape,
        Self::NonUnitaryMatrix,
        Self::BadObservable,
        Self::IncompletePartition,
        Self::BadCoupling,
        Self::ReverseWithoutCouple,
        Self::TimeCollision,
        Self::BadInitialState,
        Self::BadQuery,
        Self::MissingProjectorFamilies,
        Self::NumericalInvariant,
        Self::Io,
        Self::Internal,
    ];
}

#[derive(Clone, Debug, Error, PartialEq)]
#[error("error[{}] at {path}: {message}", code.as_str())]
pub struct ScenarioError {
    pub code: ErrorCode,
    /// JSON-path-like location ("events[3].matrix"), or "document".
    pub path: String,
    pub message: String,
}

impl ScenarioError {
    pub fn new(code: ErrorCode, path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code,
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Complex number as `[re, im]`.
pub type ComplexDecl = [f64; 2];
/// Row-major complex matrix.
pub type MatrixDecl = Vec<Vec<ComplexDecl>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleDecl {
    System,
    Probe,
    Memory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorDecl {
    pub label: String,
    pub dim: usize,
    pub role: RoleDecl,
}

/// A factor's prepared state: a basis index or an amplitude vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FactorStateDecl {
    Basis(usize),
    Amplitudes(Vec<ComplexDecl>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponentDecl {
    pub weight: f64,
    pub product: Vec<FactorStateDecl>,
}

/// Either a product state or a weighted mixture of product states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDecl {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product: Option<Vec<FactorStateDecl>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<Vec<MixtureComponentDecl>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassDecl {
    pub label: String,
    pub value: f64,
    /// Basis indices (columns of the observable basis) in this class.
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableDecl {
    /// Eigenbasis columns; computational when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<MatrixDecl>,
    pub classes: Vec<ClassDecl>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventDecl {
    /// Evolution on the named factors: an explicit matrix or a named gate
    /// ("identity", "hadamard", or "rotation" with `theta`).
    Unitary {
        time: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<i64>,
        factors: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<MatrixDecl>,
    },
    /// Entangle a probe with the target factors along a partition.
    Couple {
        time: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<i64>,
        probe: String,
        targets: Vec<String>,
        partition: ObservableDecl,
    },
    /// Undo the most recent coupling of the named probe.
    Reverse {
        time: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<i64>,
        probe: String,
    },
    /// Copy a probe's reading into a memory factor.
    Register {
        time: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<i64>,
        memory: String,
        probe: String,
    },
    /// A perceived outcome: measure an observable on the named factors.
    Observe {
        time: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<i64>,
        factors: Vec<String>,
        observable: ObservableDecl,
    },
}

impl EventDecl {
    pub fn time(&self) -> f64 {
        match self {
            Self::Unitary { time, .. }
            | Self::Couple { time, .. }
            | Self::Reverse { time, .. }
            | Self::Register { time, .. }
            | Self::Observe { time, .. } => *time,
        }
    }

    pub fn seq(&self) -> Option<i64> {
        match self {
            Self::Unitary { seq, .. }
            | Self::Couple { seq, .. }
            | Self::Reverse { seq, .. }
            | Self::Register { seq, .. }
            | Self::Observe { seq, .. } => *seq,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum QueryDecl {
    /// Joint distribution over every observe event's outcome.
    JointDistribution {},
    /// Probability of one specific outcome-label tuple.
    ReturnProbability { outcome: Vec<String> },
    /// Consistency check of the declared projector families.
    HistoriesCheck {},
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineDecl {
    Feynman,
    Evolution,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsDecl {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<EngineDecl>,
}

/// One history family: times that slice the event list into intervals, and
/// a complete projector set (over the full composite) per time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyDecl {
    pub name: String,
    pub times: Vec<f64>,
    pub observables: Vec<ObservableDecl>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub format_version: u32,
    pub factors: Vec<FactorDecl>,
    pub initial: InitialDecl,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<EventDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projector_families: Option<Vec<FamilyDecl>>,
    pub query: QueryDecl,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<OptionsDecl>,
}

/// Parse and fully validate a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioDocument, ScenarioError> {
    let doc: ScenarioDocument = serde_json::from_str(text).map_err(|e| {
        ScenarioError::new(
            ErrorCode::Syntax,
            format!("line {}, column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    compile(&doc)?;
    Ok(doc)
}

/// Serialize a document back to JSON; parsing the output reproduces the
/// document exactly.
pub fn serialize_scenario(doc: &ScenarioDocument) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("document serializes");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_doc() -> String {
        r#"{
            "format_version": 1,
            "factors": [{"label": "s", "dim": 2, "role": "system"}],
            "initial": {"product": [0]},
            "events": [
                {"type": "observe", "time": 1.0, "factors": ["s"], "observable": {
                    "classes": [
                        {"label": "zero", "value": 0.0, "members": [0]},
                        {"label": "one", "value": 1.0, "members": [1]}
                    ]
                }}
            ],
            "query": {"type": "joint_distribution"}
        }"#
        .to_string()
    }

    #[test]
    fn minimal_document_parses() {
        let doc = parse_scenario(&minimal_doc()).unwrap();
        assert_eq!(doc.factors.len(), 1);
        assert_eq!(doc.events.len(), 1);
    }

    #[test]
    fn identity_scenario_has_one_certain_outcome() {
        let doc = parse_scenario(&minimal_doc()).unwrap();
        let report = run(&doc).unwrap();
        match &report.result {
            ReportResult::Distribution { rows, total_probability, .. } => {
                assert!((total_probability - 1.0).abs() < 1e-12);
                let zero = rows.iter().find(|r| r.outcome == vec!["zero"]).unwrap();
                assert!((zero.probability - 1.0).abs() < 1e-12);
            }
            other => panic!("unexpected report kind: {other:?}"),
        }
    }

    #[test]
    fn projector_matrix_is_rejected_as_non_unitary() {
        let text = r#"{
            "format_version": 1,
            "factors": [{"label": "s", "dim": 2, "role": "system"}],
            "initial": {"product": [0]},
            "events": [
                {"type": "unitary", "time": 0.5, "factors": ["s"],
                 "matrix": [[[1,0],[0,0]],[[0,0],[0,0]]]},
                {"type": "observe", "time": 1.0, "factors": ["s"], "observable": {
                    "classes": [{"label": "any", "value": 0.0, "members": [0, 1]}]
                }}
            ],
            "query": {"type": "joint_distribution"}
        }"#;
        let e = parse_scenario(text).unwrap_err();
        assert_eq!(e.code, ErrorCode::NonUnitaryMatrix);
        assert!(e.message.contains("unitarity violation"), "{}", e.message);
        assert!(e.message.contains("deviation"), "{}", e.message);
    }

    #[test]
    fn parse_serialize_parse_is_a_fixed_point() {
        let doc = parse_scenario(&minimal_doc()).unwrap();
        let text = serialize_scenario(&doc);
        let doc2 = parse_scenario(&text).unwrap();
        assert_eq!(doc, doc2);
        assert_eq!(serialize_scenario(&doc2), text);
    }

    #[test]
    fn report_json_round_trip_is_byte_identical() {
        let doc = parse_scenario(&minimal_doc()).unwrap();
        let report = run(&doc).unwrap();
        let text = emit(&report, OutputFormat::Json);
        let parsed: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(emit(&parsed, OutputFormat::Json), text);
    }

    #[test]
    fn hadamard_named_gate_gives_even_odds() {
        let text = r#"{
            "format_version": 1,
            "factors": [{"label": "s", "dim": 2, "role": "system"}],
            "initial": {"product": [0]},
            "events": [
                {"type": "unitary", "time": 0.5, "factors": ["s"], "name": "hadamard"},
                {"type": "observe", "time": 1.0, "factors": ["s"], "observable": {
                    "classes": [
                        {"label": "zero", "value": 0.0, "members": [0]},
                        {"label": "one", "value": 1.0, "members": [1]}
                    ]
                }}
            ],
            "query": {"type": "joint_distribution"},
            "options": {"engine": "both"}
        }"#;
        let doc = parse_scenario(text).unwrap();
        let report = run(&doc).unwrap();
        match &report.result {
            ReportResult::Distribution { rows, max_engine_difference, .. } => {
                for row in rows {
                    assert!((row.probability - 0.5).abs() < 1e-12);
                    assert!(row.evolution_probability.is_some());
                }
                assert!(max_engine_difference.unwrap() < 1e-12);
            }
            other => panic!("unexpected report kind: {other:?}"),
        }
    }

    #[test]
    fn return_probability_query_selects_one_outcome() {
        let text = r#"{
            "format_version": 1,
            "factors": [{"label": "s", "dim": 2, "role": "system"}],
            "initial": {"product": [0]},
            "events": [
                {"type": "unitary", "time": 0.5, "factors": ["s"], "name": "rotation", "theta": 0.7},
                {"type": "observe", "time": 1.0, "factors": ["s"], "observable": {
                    "classes": [
                        {"label": "zero", "value": 0.0, "members": [0]},
                        {"label": "one", "value": 1.0, "members": [1]}
                    ]
                }}
            ],
            "query": {"type": "return_probability", "outcome": ["zero"]}
        }"#;
        let doc = parse_scenario(text).unwrap();
        let report = run(&doc).unwrap();
        match &report.result {
            ReportResult::Probability { probability, .. } => {
                let expected = 0.7f64.cos().powi(2);
                assert!((probability - expected).abs() < 1e-12);
            }
            other => panic!("unexpected report kind: {other:?}"),
        }
    }

    #[test]
    fn equal_times_without_seq_collide() {
        let text = r#"{
            "format_version": 1,
            "factors": [{"label": "s", "dim": 2, "role": "system"}],
            "initial": {"product": [0]},
            "events": [
                {"type": "unitary", "time": 0.5, "factors": ["s"], "name": "hadamard"},
                {"type": "unitary", "time": 0.5, "factors": ["s"], "name": "hadamard"},
                {"type": "observe", "time": 1.0, "factors": ["s"], "observable": {
                    "classes": [{"label": "any", "value": 0.0, "members": [0, 1]}]
                }}
            ],
            "query": {"type": "joint_distribution"}
        }"#;
        let e = parse_scenario(text).unwrap_err();
        assert_eq!(e.code, ErrorCode::TimeCollision);
    }

    #[test]
    fn equal_times_with_seq_are_ordered() {
        // X then H differs from H then X; seq indices pin the order.
        let text = r#"{
            "format_version": 1,
            "factors": [{"label": "s", "dim": 2, "role": "system"}],
            "initial": {"product": [0]},
            "events": [
                {"type": "unitary", "time": 0.5, "seq": 2, "factors": ["s"], "name": "hadamard"},
                {"type": "unitary", "time": 0.5, "seq": 1, "factors": ["s"],
                 "matrix": [[[0,0],[1,0]],[[1,0],[0,0]]]},
                {"type": "observe", "time": 1.0, "factors": ["s"], "observable": {
                    "classes": [
                        {"label": "zero", "value": 0.0, "members": [0]},
                        {"label": "one", "value": 1.0, "members": [1]}
                    ]
                }}
            ],
            "query": {"type": "joint_distribution"}
        }"#;
        let doc = parse_scenario(text).unwrap();
        let report = run(&doc).unwrap();
        match &report.result {
            ReportResult::Distribution { rows, .. } => {
                // X|0> = |1>, then H: P(zero) = P(one) = 1/2 with the minus
                // branch; the flip-first order is what seq dictates.
                for row in rows {
                    assert!((row.probability - 0.5).abs() < 1e-12);
                }
            }
            other => panic!("unexpected report kind: {other:?}"),
        }
    }

    #[test]
    fn histories_check_runs_declared_families() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let text = format!(
            r#"{{
            "format_version": 1,
            "factors": [{{"label": "s", "dim": 2, "role": "system"}}],
            "initial": {{"product": [[[{h}, 0], [{h}, 0]]]}},
            "projector_families": [{{
                "name": "diagonal-then-computational",
                "times": [1.0, 2.0],
                "observables": [
                    {{"classes": [
                        {{"label": "zero", "value": 0.0, "members": [0]}},
                        {{"label": "one", "value": 1.0, "members": [1]}}
                    ]}},
                    {{"basis": [[[{h}, 0], [{h}, 0]], [[{h}, 0], [{hm}, 0]]],
                      "classes": [
                        {{"label": "plus", "value": 1.0, "members": [0]}},
                        {{"label": "minus", "value": -1.0, "members": [1]}}
                    ]}}
                ]
            }}],
            "query": {{"type": "histories_check"}}
        }}"#,
            h = h,
            hm = -h
        );
        let doc = parse_scenario(&text).unwrap();
        let report = run(&doc).unwrap();
        match &report.result {
            ReportResult::Histories { families } => {
                assert_eq!(families.len(), 1);
                assert!(!families[0].consistent);
                assert!((families[0].max_off_diagonal - 0.25).abs() < 1e-12);
            }
            other => panic!("unexpected report kind: {other:?}"),
        }
    }

    #[test]
    fn histories_check_without_families_is_rejected() {
        let mut doc = parse_scenario(&minimal_doc()).unwrap();
        doc.events.clear();
        doc.query = QueryDecl::HistoriesCheck {};
        let e = run(&doc).unwrap_err();
        assert_eq!(e.code, ErrorCode::MissingProjectorFamilies);
    }

    #[test]
    fn capacity_error_reports_exit_code_three() {
        let text = r#"{
            "format_version": 1,
            "factors": [
                {"label": "a", "dim": 65, "role": "system"},
                {"label": "b", "dim": 64, "role": "system"}
            ],
            "initial": {"product": [0, 0]},
            "query": {"type": "joint_distribution"}
        }"#;
        let e = parse_scenario(text).unwrap_err();
        assert_eq!(e.code, ErrorCode::CapacityExceeded);
        assert_eq!(e.code.exit_code(), 3);
    }

    #[test]
    fn empty_distribution_emits_header_only() {
        let report = Report {
            format_version: 1,
            engine: "feynman".to_string(),
            tolerance: 1e-10,
            result: ReportResult::Distribution {
                rows: vec![],
                total_probability: 0.0,
                max_engine_difference: None,
            },
        };
        let table = emit(&report, OutputFormat::Table);
        assert_eq!(table.lines().count(), 2); // engine line + header
        let csv = emit(&report, OutputFormat::Csv);
        assert_eq!(csv.lines().count(), 1);
    }

    #[test]
    fn two_outcome_rows_emit_in_label_order() {
        let doc = parse_scenario(&minimal_doc()).unwrap();
        let report = run(&doc).unwrap();
        let csv = emit(&report, OutputFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "outcome_1,probability");
        assert!(lines[1].starts_with("one,"));
        assert!(lines[2].starts_with("zero,"));
    }

    #[test]
    fn builtin_wigner_friend_reports_even_split() {
        let report = run_builtin("wigner-friend", None).unwrap();
        match &report.result {
            ReportResult::Builtin { rows, .. } => {
                let yes = rows.iter().find(|r| r.quantity == "P(yes, then yes)").unwrap();
                assert!((yes.simulated - 0.5).abs() < 1e-12);
                let cross = rows.iter().find(|r| r.quantity == "P(yes, then no)").unwrap();
                assert!(cross.simulated.abs() < 1e-12);
            }
            other => panic!("unexpected report kind: {other:?}"),
        }
    }

    #[test]
    fn unknown_builtin_is_rejected() {
        let e = run_builtin("no-such-thing", None).unwrap_err();
        assert_eq!(e.code, ErrorCode::BadQuery);
    }

    #[test]
    fn syntax_error_carries_line_and_column() {
        let e = parse_scenario("{ not json").unwrap_err();
        assert_eq!(e.code, ErrorCode::Syntax);
        assert!(e.path.contains("line 1"));
    }

    #[test]
    fn mixture_runs_on_both_engines() {
        let text = r#"{
            "format_version": 1,
            "factors": [{"label": "s", "dim": 2, "role": "system"}],
            "initial": {"mixture": [
                {"weight": 0.25, "product": [0]},
                {"weight": 0.75, "product": [1]}
            ]},
            "events": [
                {"type": "unitary", "time": 0.5, "factors": ["s"], "name": "hadamard"},
                {"type": "observe", "time": 1.0, "factors": ["s"], "observable": {
                    "classes": [
                        {"label": "zero", "value": 0.0, "members": [0]},
                        {"label": "one", "value": 1.0, "members": [1]}
                    ]
                }}
            ],
            "query": {"type": "joint_distribution"},
            "options": {"engine": "both"}
        }"#;
        let doc = parse_scenario(text).unwrap();
        let report = run(&doc).unwrap();
        match &report.result {
            ReportResult::Distribution { rows, max_engine_difference, .. } => {
                assert_eq!(rows.len(), 2);
                assert!(max_engine_difference.unwrap() < 1e-12);
            }
            other => panic!("unexpected report kind: {other:?}"),
        }
    }

    #[test]
    fn trailing_event_after_final_observe_is_rejected() {
        let text = r#"{
            "format_version": 1,
            "factors": [{"label": "s", "dim": 2, "role": "system"}],
            "initial": {"product": [0]},
            "events": [
                {"type": "observe", "time": 1.0, "factors": ["s"], "observable": {
                    "classes": [{"label": "any", "value": 0.0, "members": [0, 1]}]
                }},
                {"type": "unitary", "time": 2.0, "factors": ["s"], "name": "hadamard"}
            ],
            "query": {"type": "joint_distribution"}
        }"#;
        let e = parse_scenario(text).unwrap_err();
        assert_eq!(e.code, ErrorCode::BadQuery);
    }

}
