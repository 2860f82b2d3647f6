//! Compilation of scenario documents into engine structures, and execution.

use std::collections::BTreeMap;

use crate::apparatus::{CompositeSpace, CouplingSpec, Factor, FactorRole, FactorState};
use crate::chain::{
    ChainBuilder, EigenvalueClass, InitialState, MeasurementChain, MixtureComponent, Observable,
};
use crate::dist::{Distribution, OutcomeSequence};
use crate::evolution;
use crate::feynman;
use crate::gedanken;
use crate::hilbert::{self, COperator, CVector, C64};
use crate::histories::{self, HistoryFamily};

use super::emit::{BuiltinRow, DistributionRow, FamilyReport, Report, ReportResult};
use super::{
    ComplexDecl, EngineDecl, ErrorCode, EventDecl, FactorStateDecl, FamilyDecl, InitialDecl,
    MatrixDecl, ObservableDecl, QueryDecl, RoleDecl, ScenarioDocument, ScenarioError,
};

/// Unitarity tolerance applied to matrices at load.
const LOAD_UNITARITY_TOL: f64 = 1e-10;
/// States and weights may deviate this much before renormalization fails.
const LOAD_NORM_TOL: f64 = 1e-6;
/// Default engine tolerance for the probability-sum invariant.
const DEFAULT_TOLERANCE: f64 = 1e-10;

pub const BUILTIN_NAMES: [&str; 6] = [
    "scenario-a",
    "scenario-b",
    "scenario-c",
    "wigner-friend",
    "interference",
    "reduced",
];

/// Fully validated runtime form of a scenario document.
pub struct CompiledScenario {
    pub space: CompositeSpace,
    /// Present for distribution and probability queries.
    pub chain: Option<MeasurementChain>,
    /// Projector families compiled for a histories check.
    pub families: Vec<(String, HistoryFamily)>,
    pub query: QueryDecl,
    pub tolerance: f64,
    pub engine: EngineDecl,
}

fn err(code: ErrorCode, path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::new(code, path, message)
}

fn complex_from(decl: &ComplexDecl) -> C64 {
    C64::new(decl[0], decl[1])
}

fn matrix_from(decl: &MatrixDecl, path: &str) -> Result<COperator, ScenarioError> {
    let rows = decl.len();
    if rows == 0 {
        return Err(err(ErrorCode::BadMatrixShape, path, "matrix is empty"));
    }
    for (i, row) in decl.iter().enumerate() {
        if row.len() != rows {
            return Err(err(
                ErrorCode::BadMatrixShape,
                format!("{path}[{i}]"),
                format!("row has {} entries, expected {rows}", row.len()),
            ));
        }
    }
    Ok(COperator::from_fn(rows, rows, |i, j| {
        complex_from(&decl[i][j])
    }))
}

fn unitary_from(decl: &MatrixDecl, expected_dim: usize, path: &str) -> Result<COperator, ScenarioError> {
    let m = matrix_from(decl, path)?;
    if m.nrows() != expected_dim {
        return Err(err(
            ErrorCode::BadMatrixShape,
            path,
            format!("matrix is {}x{}, factors have dimension {expected_dim}", m.nrows(), m.ncols()),
        ));
    }
    let deviation = hilbert::unitarity_deviation(&m);
    if deviation >= LOAD_UNITARITY_TOL {
        return Err(err(
            ErrorCode::NonUnitaryMatrix,
            path,
            format!("unitarity violation, max deviation {deviation:.3e}"),
        ));
    }
    Ok(m)
}

/// Observable over `dim` basis vectors from a declaration.
fn observable_from(
    decl: &ObservableDecl,
    dim: usize,
    path: &str,
) -> Result<Observable, ScenarioError> {
    let basis = match &decl.basis {
        None => hilbert::identity(dim),
        Some(matrix) => unitary_from(matrix, dim, &format!("{path}.basis"))?,
    };
    if decl.classes.is_empty() {
        return Err(err(
            ErrorCode::BadObservable,
            format!("{path}.classes"),
            "at least one eigenvalue class is required",
        ));
    }
    let mut assignment: Vec<Option<usize>> = vec![None; dim];
    let mut classes = Vec::with_capacity(decl.classes.len());
    for (m, class) in decl.classes.iter().enumerate() {
        classes.push(EigenvalueClass::new(class.label.clone(), class.value));
        for &n in &class.members {
            if n >= dim {
                return Err(err(
                    ErrorCode::BadObservable,
                    format!("{path}.classes[{m}].members"),
                    format!("basis index {n} out of range for dimension {dim}"),
                ));
            }
            if assignment[n].is_some() {
                return Err(err(
                    ErrorCode::BadObservable,
                    format!("{path}.classes[{m}].members"),
                    format!("basis index {n} assigned to more than one class"),
                ));
            }
            assignment[n] = Some(m);
        }
    }
    let mut resolved = Vec::with_capacity(dim);
    for (n, slot) in assignment.into_iter().enumerate() {
        match slot {
            Some(m) => resolved.push(m),
            None => {
                return Err(err(
                    ErrorCode::BadObservable,
                    format!("{path}.classes"),
                    format!("basis index {n} belongs to no class; the partition is incomplete"),
                ))
            }
        }
    }
    Observable::new_prechecked(basis, classes, resolved)
        .map_err(|e| err(ErrorCode::BadObservable, path, e.to_string()))
}

/// Lift an observable on a factor subset to the composite space.
fn embed_observable(
    space: &CompositeSpace,
    labels: &[&str],
    subset: &Observable,
    path: &str,
) -> Result<Observable, ScenarioError> {
    let mut factor_indices = Vec::with_capacity(labels.len());
    for &label in labels {
        factor_indices.push(space.factor_index(label).map_err(|_| {
            err(
                ErrorCode::UnknownLabel,
                format!("{path}.factors"),
                format!("unknown factor label \"{label}\""),
            )
        })?);
    }
    let subset_of = |idx: usize| {
        let mut t = 0usize;
        for &f in &factor_indices {
            t = t * space.factor_dim(f) + space.digit(idx, f);
        }
        t
    };
    let assignment: Vec<usize> = (0..space.dim()).map(|idx| subset.class_of(subset_of(idx))).collect();
    let classes = subset.classes().to_vec();
    if subset.is_computational() {
        Observable::computational_with_classes(space.dim(), classes, assignment)
            .map_err(|e| err(ErrorCode::BadObservable, path, e.to_string()))
    } else {
        let basis = space
            .embed(subset.basis(), labels)
            .map_err(|e| err(ErrorCode::Internal, path, e.to_string()))?;
        Observable::new_prechecked(basis, classes, assignment)
            .map_err(|e| err(ErrorCode::BadObservable, path, e.to_string()))
    }
}

struct LoadedInitial {
    state: InitialState,
    /// Preparation observable: per-factor completions for a pure product,
    /// the trivial single class for a mixture.
    observable: Observable,
}

fn factor_state_from(
    decl: &FactorStateDecl,
    factor: &Factor,
    path: &str,
) -> Result<FactorState, ScenarioError> {
    match decl {
        FactorStateDecl::Basis(k) => {
            if *k >= factor.dim {
                return Err(err(
                    ErrorCode::BadInitialState,
                    path,
                    format!(
                        "basis index {k} out of range for factor \"{}\" of dimension {}",
                        factor.label, factor.dim
                    ),
                ));
            }
            Ok(FactorState::Basis(*k))
        }
        FactorStateDecl::Amplitudes(amps) => {
            if amps.len() != factor.dim {
                return Err(err(
                    ErrorCode::BadInitialState,
                    path,
                    format!(
                        "state has {} amplitudes, factor \"{}\" has dimension {}",
                        amps.len(),
                        factor.label,
                        factor.dim
                    ),
                ));
            }
            let v = CVector::from_iterator(amps.len(), amps.iter().map(complex_from));
            let norm = v.norm();
            if (norm - 1.0).abs() > LOAD_NORM_TOL {
                return Err(err(
                    ErrorCode::BadInitialState,
                    path,
                    format!("state norm {norm:.6} is not 1"),
                ));
            }
            Ok(FactorState::Vector(v.unscale(norm)))
        }
    }
}

fn product_parts(
    decls: &[FactorStateDecl],
    space: &CompositeSpace,
    path: &str,
) -> Result<Vec<FactorState>, ScenarioError> {
    if decls.len() != space.factors().len() {
        return Err(err(
            ErrorCode::BadInitialState,
            path,
            format!(
                "product has {} entries, document declares {} factors",
                decls.len(),
                space.factors().len()
            ),
        ));
    }
    decls
        .iter()
        .zip(space.factors())
        .enumerate()
        .map(|(i, (decl, factor))| factor_state_from(decl, factor, &format!("{path}[{i}]")))
        .collect()
}

fn completion_observable(
    space: &CompositeSpace,
    parts: &[FactorState],
) -> Result<Observable, ScenarioError> {
    let mut basis = hilbert::identity(1);
    for (factor, part) in space.factors().iter().zip(parts) {
        let factor_basis = match part {
            FactorState::Basis(_) => hilbert::identity(factor.dim),
            FactorState::Vector(v) => hilbert::complete_basis(&[v.clone()], factor.dim)
                .map_err(|e| err(ErrorCode::Internal, "initial", e.to_string()))?,
        };
        basis = hilbert::tensor_product(&basis, &factor_basis)
            .map_err(|e| err(ErrorCode::CapacityExceeded, "initial", e.to_string()))?;
    }
    let classes = (0..space.dim())
        .map(|n| EigenvalueClass::new(format!("p{n}"), n as f64))
        .collect();
    Observable::new_prechecked(basis, classes, (0..space.dim()).collect())
        .map_err(|e| err(ErrorCode::Internal, "initial", e.to_string()))
}

fn load_initial(
    decl: &InitialDecl,
    space: &CompositeSpace,
) -> Result<LoadedInitial, ScenarioError> {
    match (&decl.product, &decl.mixture) {
        (Some(_), Some(_)) | (None, None) => Err(err(
            ErrorCode::BadInitialState,
            "initial",
            "exactly one of \"product\" or \"mixture\" is required",
        )),
        (Some(product), None) => {
            let parts = product_parts(product, space, "initial.product")?;
            let state = space
                .product_state(&parts)
                .map_err(|e| err(ErrorCode::Internal, "initial.product", e.to_string()))?;
            let observable = completion_observable(space, &parts)?;
            Ok(LoadedInitial {
                state: InitialState::pure(state)
                    .map_err(|e| err(ErrorCode::BadInitialState, "initial.product", e.to_string()))?,
                observable,
            })
        }
        (None, Some(mixture)) => {
            if mixture.is_empty() {
                return Err(err(
                    ErrorCode::BadInitialState,
                    "initial.mixture",
                    "mixture needs at least one component",
                ));
            }
            let mut total = 0.0;
            for (i, c) in mixture.iter().enumerate() {
                if !(c.weight > 0.0) {
                    return Err(err(
                        ErrorCode::BadInitialState,
                        format!("initial.mixture[{i}].weight"),
                        format!("weight {} must be positive", c.weight),
                    ));
                }
                total += c.weight;
            }
            if (total - 1.0).abs() > LOAD_NORM_TOL {
                return Err(err(
                    ErrorCode::BadInitialState,
                    "initial.mixture",
                    format!("weights sum to {total:.6}, expected 1"),
                ));
            }
            let mut components = Vec::with_capacity(mixture.len());
            for (i, c) in mixture.iter().enumerate() {
                let parts =
                    product_parts(&c.product, space, &format!("initial.mixture[{i}].product"))?;
                let state = space.product_state(&parts).map_err(|e| {
                    err(ErrorCode::Internal, format!("initial.mixture[{i}]"), e.to_string())
                })?;
                components.push(MixtureComponent {
                    weight: c.weight / total,
                    state,
                });
            }
            Ok(LoadedInitial {
                state: InitialState::mixed(components).map_err(|e| {
                    err(ErrorCode::BadInitialState, "initial.mixture", e.to_string())
                })?,
                observable: Observable::trivial(space.dim(), "prepared"),
            })
        }
    }
}

enum CompiledEventKind {
    /// Gate applied on the named factors.
    Op { labels: Vec<String>, gate: COperator },
    /// A perceived outcome.
    Observe { observable: Observable },
}

struct CompiledEvent {
    order: usize,
    kind: CompiledEventKind,
}

fn named_gate(name: &str, theta: Option<f64>, dim: usize, path: &str) -> Result<COperator, ScenarioError> {
    match name {
        "identity" => Ok(hilbert::identity(dim)),
        "hadamard" => {
            if dim != 2 {
                return Err(err(
                    ErrorCode::BadMatrixShape,
                    path,
                    format!("\"hadamard\" is 2-dimensional, factors have dimension {dim}"),
                ));
            }
            Ok(hilbert::hadamard())
        }
        "rotation" => {
            if dim != 2 {
                return Err(err(
                    ErrorCode::BadMatrixShape,
                    path,
                    format!("\"rotation\" is 2-dimensional, factors have dimension {dim}"),
                ));
            }
            let theta = theta.ok_or_else(|| {
                err(ErrorCode::BadMatrixShape, path, "\"rotation\" requires \"theta\"")
            })?;
            Ok(hilbert::rotation(theta))
        }
        other => Err(err(
            ErrorCode::BadMatrixShape,
            path,
            format!("unknown built-in unitary \"{other}\" (expected identity, hadamard, or rotation)"),
        )),
    }
}

fn resolve_labels(
    space: &CompositeSpace,
    labels: &[String],
    path: &str,
) -> Result<usize, ScenarioError> {
    if labels.is_empty() {
        return Err(err(ErrorCode::UnknownLabel, path, "factor list is empty"));
    }
    let mut dim = 1usize;
    let mut seen = Vec::new();
    for label in labels {
        let idx = space.factor_index(label).map_err(|_| {
            err(
                ErrorCode::UnknownLabel,
                path,
                format!("unknown factor label \"{label}\""),
            )
        })?;
        if seen.contains(&idx) {
            return Err(err(
                ErrorCode::UnknownLabel,
                path,
                format!("factor \"{label}\" listed twice"),
            ));
        }
        seen.push(idx);
        dim *= space.factor_dim(idx);
    }
    Ok(dim)
}

/// Sort events by `(time, seq)`; equal times demand distinct explicit `seq`.
fn sorted_event_indices(events: &[EventDecl]) -> Result<Vec<usize>, ScenarioError> {
    // JSON cannot encode non-finite numbers, but documents can also be built
    // programmatically.
    for (i, event) in events.iter().enumerate() {
        if !event.time().is_finite() {
            return Err(err(
                ErrorCode::Syntax,
                format!("events[{i}].time"),
                "event time must be finite",
            ));
        }
    }
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| {
        events[a]
            .time()
            .partial_cmp(&events[b].time())
            .expect("checked finite above")
            .then(events[a].seq().unwrap_or(0).cmp(&events[b].seq().unwrap_or(0)))
    });
    for pair in order.windows(2) {
        let (a, b) = (&events[pair[0]], &events[pair[1]]);
        if a.time() == b.time() {
            match (a.seq(), b.seq()) {
                (Some(x), Some(y)) if x != y => {}
                _ => {
                    return Err(err(
                        ErrorCode::TimeCollision,
                        format!("events[{}]", pair[1]),
                        format!(
                            "event at time {} collides with another; give both distinct \"seq\" indices",
                            b.time()
                        ),
                    ))
                }
            }
        }
    }
    Ok(order)
}

fn compile_events(
    space: &CompositeSpace,
    events: &[EventDecl],
) -> Result<Vec<CompiledEvent>, ScenarioError> {
    let order = sorted_event_indices(events)?;
    // Most recent coupling gate per probe, for reversals.
    let mut live_couplings: BTreeMap<String, (Vec<String>, COperator)> = BTreeMap::new();
    let mut compiled = Vec::with_capacity(order.len());
    for &i in &order {
        let path = format!("events[{i}]");
        let kind = match &events[i] {
            EventDecl::Unitary {
                factors,
                name,
                theta,
                matrix,
                ..
            } => {
                let dim = resolve_labels(space, factors, &path)?;
                let gate = match (name, matrix) {
                    (Some(name), None) => named_gate(name, *theta, dim, &format!("{path}.name"))?,
                    (None, Some(matrix)) => {
                        unitary_from(matrix, dim, &format!("{path}.matrix"))?
                    }
                    _ => {
                        return Err(err(
                            ErrorCode::BadMatrixShape,
                            path,
                            "exactly one of \"name\" or \"matrix\" is required",
                        ))
                    }
                };
                CompiledEventKind::Op {
                    labels: factors.clone(),
                    gate,
                }
            }
            EventDecl::Couple {
                probe,
                targets,
                partition,
                time,
                ..
            } => {
                let target_dim = resolve_labels(space, targets, &path)?;
                space.factor_index(probe).map_err(|_| {
                    err(
                        ErrorCode::UnknownLabel,
                        format!("{path}.probe"),
                        format!("unknown factor label \"{probe}\""),
                    )
                })?;
                let partition =
                    observable_from(partition, target_dim, &format!("{path}.partition"))?;
                let spec = CouplingSpec::new(probe.clone(), targets.clone(), partition, *time);
                let gate = spec.gate(space).map_err(|e| {
                    let code = match &e {
                        crate::apparatus::ApparatusError::IncompletePartition { .. } => {
                            ErrorCode::IncompletePartition
                        }
                        _ => ErrorCode::BadCoupling,
                    };
                    err(code, &path, e.to_string())
                })?;
                let labels: Vec<String> = spec
                    .factor_labels()
                    .into_iter()
                    .map(str::to_string)
                    .collect();
                live_couplings.insert(probe.clone(), (labels.clone(), gate.clone()));
                CompiledEventKind::Op { labels, gate }
            }
            EventDecl::Reverse { probe, .. } => match live_couplings.get(probe) {
                Some((labels, gate)) => CompiledEventKind::Op {
                    labels: labels.clone(),
                    gate: gate.adjoint(),
                },
                None => {
                    return Err(err(
                        ErrorCode::ReverseWithoutCouple,
                        path,
                        format!("no earlier couple event for probe \"{probe}\""),
                    ))
                }
            },
            EventDecl::Register { memory, probe, .. } => {
                let (gate, _, _) =
                    crate::apparatus::register_gate(space, memory, probe).map_err(|e| {
                        let code = match &e {
                            crate::apparatus::ApparatusError::UnknownLabel { .. } => {
                                ErrorCode::UnknownLabel
                            }
                            _ => ErrorCode::BadCoupling,
                        };
                        err(code, &path, e.to_string())
                    })?;
                CompiledEventKind::Op {
                    labels: vec![memory.clone(), probe.clone()],
                    gate,
                }
            }
            EventDecl::Observe {
                factors,
                observable,
                ..
            } => {
                let subset_dim = resolve_labels(space, factors, &path)?;
                let subset =
                    observable_from(observable, subset_dim, &format!("{path}.observable"))?;
                let labels: Vec<&str> = factors.iter().map(String::as_str).collect();
                let observable = embed_observable(space, &labels, &subset, &path)?;
                CompiledEventKind::Observe { observable }
            }
        };
        compiled.push(CompiledEvent { order: i, kind });
    }
    Ok(compiled)
}

fn compile_space(doc: &ScenarioDocument) -> Result<CompositeSpace, ScenarioError> {
    if doc.format_version != 1 {
        return Err(err(
            ErrorCode::UnsupportedVersion,
            "format_version",
            format!("format version {} is not supported (expected 1)", doc.format_version),
        ));
    }
    if doc.factors.is_empty() {
        return Err(err(ErrorCode::BadFactor, "factors", "at least one factor is required"));
    }
    let factors: Vec<Factor> = doc
        .factors
        .iter()
        .map(|f| {
            let role = match f.role {
                RoleDecl::System => FactorRole::System,
                RoleDecl::Probe => FactorRole::Probe,
                RoleDecl::Memory => FactorRole::Memory,
            };
            Factor::new(f.label.clone(), f.dim, role)
        })
        .collect();
    CompositeSpace::new(factors).map_err(|e| {
        let code = match &e {
            crate::apparatus::ApparatusError::CapacityExceeded { .. } => ErrorCode::CapacityExceeded,
            crate::apparatus::ApparatusError::DuplicateLabel { .. } => ErrorCode::DuplicateLabel,
            _ => ErrorCode::BadFactor,
        };
        err(code, "factors", e.to_string())
    })
}

/// Validate a document end to end and build its runtime structures.
pub fn compile(doc: &ScenarioDocument) -> Result<CompiledScenario, ScenarioError> {
    let space = compile_space(doc)?;
    let initial = load_initial(&doc.initial, &space)?;
    let events = compile_events(&space, &doc.events)?;

    let tolerance = doc
        .options
        .as_ref()
        .and_then(|o| o.tolerance)
        .unwrap_or(DEFAULT_TOLERANCE);
    let engine = doc
        .options
        .as_ref()
        .and_then(|o| o.engine.clone())
        .unwrap_or(EngineDecl::Feynman);

    let histories_query = matches!(doc.query, QueryDecl::HistoriesCheck {});

    let mut families = Vec::new();
    if histories_query {
        let decls = doc.projector_families.as_deref().unwrap_or(&[]);
        if decls.is_empty() {
            return Err(err(
                ErrorCode::MissingProjectorFamilies,
                "projector_families",
                "a histories check needs at least one projector family",
            ));
        }
        let pure = match &initial.state {
            InitialState::Pure(v) => v.clone(),
            InitialState::Mixed(_) => {
                return Err(err(
                    ErrorCode::BadInitialState,
                    "initial",
                    "a histories check needs a pure preparation",
                ))
            }
        };
        for (fi, decl) in decls.iter().enumerate() {
            families.push((
                decl.name.clone(),
                compile_family(&space, &events, doc, decl, &pure, fi)?,
            ));
        }
    }

    let chain = if histories_query {
        None
    } else {
        Some(compile_chain(&space, &events, doc, initial)?)
    };

    if let Some(chain) = &chain {
        if let QueryDecl::ReturnProbability { outcome } = &doc.query {
            if outcome.len() != chain.steps() {
                return Err(err(
                    ErrorCode::BadQuery,
                    "query.outcome",
                    format!(
                        "outcome names {} labels, document has {} observe events",
                        outcome.len(),
                        chain.steps()
                    ),
                ));
            }
            for (l, label) in outcome.iter().enumerate() {
                if chain.observable(l + 1).class_by_label(label).is_none() {
                    return Err(err(
                        ErrorCode::BadQuery,
                        format!("query.outcome[{l}]"),
                        format!("observable at observe {l} has no class labeled \"{label}\""),
                    ));
                }
            }
        }
    }

    Ok(CompiledScenario {
        space,
        chain,
        families,
        query: doc.query.clone(),
        tolerance,
        engine,
    })
}

fn compile_chain(
    space: &CompositeSpace,
    events: &[CompiledEvent],
    _doc: &ScenarioDocument,
    initial: LoadedInitial,
) -> Result<MeasurementChain, ScenarioError> {
    let mut interval = hilbert::identity(space.dim());
    let mut ops_pending = 0usize;
    let mut steps: Vec<(COperator, Observable)> = Vec::new();
    let mut last_op_index = 0usize;
    for event in events {
        match &event.kind {
            CompiledEventKind::Op { labels, gate } => {
                let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
                space
                    .apply_to_columns(gate, &refs, &mut interval)
                    .map_err(|e| {
                        err(ErrorCode::Internal, format!("events[{}]", event.order), e.to_string())
                    })?;
                ops_pending += 1;
                last_op_index = event.order;
            }
            CompiledEventKind::Observe { observable } => {
                steps.push((interval.clone(), observable.clone()));
                interval = hilbert::identity(space.dim());
                ops_pending = 0;
            }
        }
    }
    if ops_pending > 0 && !steps.is_empty() {
        return Err(err(
            ErrorCode::BadQuery,
            format!("events[{last_op_index}]"),
            "event after the final observe has no effect on any outcome",
        ));
    }
    if ops_pending > 0 && steps.is_empty() {
        return Err(err(
            ErrorCode::BadQuery,
            format!("events[{last_op_index}]"),
            "events without any observe have no observable effect",
        ));
    }

    // Times are bookkeeping; event ordering already fixed the sequence.
    let mut builder = ChainBuilder::new(space.dim()).prepare(0.0, initial.observable, initial.state);
    for (l, (u, o)) in steps.into_iter().enumerate() {
        builder = builder.step((l + 1) as f64, u, o);
    }
    builder
        .build()
        .map_err(|e| err(ErrorCode::Internal, "document", e.to_string()))
}

fn compile_family(
    space: &CompositeSpace,
    events: &[CompiledEvent],
    _doc: &ScenarioDocument,
    decl: &FamilyDecl,
    initial: &CVector,
    family_index: usize,
) -> Result<HistoryFamily, ScenarioError> {
    let path = format!("projector_families[{family_index}]");
    if decl.times.is_empty() || decl.observables.len() != decl.times.len() {
        return Err(err(
            ErrorCode::BadQuery,
            &path,
            format!(
                "family needs matching non-empty times and observables ({} vs {})",
                decl.times.len(),
                decl.observables.len()
            ),
        ));
    }
    for w in decl.times.windows(2) {
        if w[1] <= w[0] {
            return Err(err(
                ErrorCode::BadQuery,
                format!("{path}.times"),
                "family times must be strictly increasing",
            ));
        }
    }
    for event in events {
        if matches!(event.kind, CompiledEventKind::Observe { .. }) {
            return Err(err(
                ErrorCode::BadQuery,
                format!("events[{}]", event.order),
                "a histories check takes unitary-type events only",
            ));
        }
    }

    // `events` is already in (time, seq) order; split it at the family times.
    let mut unitaries = Vec::with_capacity(decl.times.len());
    let mut cursor = 0usize;
    for &t in &decl.times {
        let mut interval = hilbert::identity(space.dim());
        while cursor < events.len() && _doc.events[events[cursor].order].time() <= t {
            if let CompiledEventKind::Op { labels, gate } = &events[cursor].kind {
                let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
                space
                    .apply_to_columns(gate, &refs, &mut interval)
                    .map_err(|e| err(ErrorCode::Internal, &path, e.to_string()))?;
            }
            cursor += 1;
        }
        unitaries.push(interval);
    }
    if cursor < events.len() {
        return Err(err(
            ErrorCode::BadQuery,
            format!("events[{}]", events[cursor].order),
            "event after the final projected time has no effect",
        ));
    }

    let observables = decl
        .observables
        .iter()
        .enumerate()
        .map(|(l, o)| observable_from(o, space.dim(), &format!("{path}.observables[{l}]")))
        .collect::<Result<Vec<_>, _>>()?;

    HistoryFamily::new(initial.clone(), unitaries, observables)
        .map_err(|e| err(ErrorCode::BadObservable, &path, e.to_string()))
}

/// Execute a document and produce a deterministic report.
pub fn run(doc: &ScenarioDocument) -> Result<Report, ScenarioError> {
    run_with(doc, None, None)
}

/// Execute with CLI-level overrides for engine selection and tolerance.
pub fn run_with(
    doc: &ScenarioDocument,
    engine_override: Option<EngineDecl>,
    tolerance_override: Option<f64>,
) -> Result<Report, ScenarioError> {
    let compiled = compile(doc)?;
    let engine = engine_override.unwrap_or_else(|| compiled.engine.clone());
    let tolerance = tolerance_override.unwrap_or(compiled.tolerance);
    match &compiled.query {
        QueryDecl::HistoriesCheck {} => histories_report(&compiled, tolerance),
        QueryDecl::JointDistribution {} => {
            let chain = compiled.chain.as_ref().expect("chain compiled");
            let (primary, secondary) = run_engines(chain, &engine, tolerance)?;
            let rows = distribution_rows(chain, &primary, secondary.as_ref());
            let total = primary.total_probability();
            let max_engine_difference = secondary.as_ref().map(|s| primary.max_abs_diff(s));
            Ok(Report {
                format_version: 1,
                engine: engine_name(&engine).to_string(),
                tolerance,
                result: ReportResult::Distribution {
                    rows,
                    total_probability: total,
                    max_engine_difference,
                },
            })
        }
        QueryDecl::ReturnProbability { outcome } => {
            let chain = compiled.chain.as_ref().expect("chain compiled");
            let (primary, secondary) = run_engines(chain, &engine, tolerance)?;
            let mut key = vec![chain.preparation_class()];
            for (l, label) in outcome.iter().enumerate() {
                key.push(
                    chain
                        .observable(l + 1)
                        .class_by_label(label)
                        .expect("validated at compile time"),
                );
            }
            let key = OutcomeSequence::new(key);
            let probability = primary.probability(&key);
            let evolution_probability = secondary.as_ref().map(|s| s.probability(&key));
            let difference = evolution_probability.map(|e| (probability - e).abs());
            Ok(Report {
                format_version: 1,
                engine: engine_name(&engine).to_string(),
                tolerance,
                result: ReportResult::Probability {
                    outcome: outcome.clone(),
                    probability,
                    evolution_probability,
                    difference,
                },
            })
        }
    }
}

/// Run the consistency check for every declared projector family.
pub fn check_histories(
    doc: &ScenarioDocument,
    tolerance_override: Option<f64>,
) -> Result<Report, ScenarioError> {
    let mut doc = doc.clone();
    doc.query = QueryDecl::HistoriesCheck {};
    run_with(&doc, None, tolerance_override)
}

fn histories_report(compiled: &CompiledScenario, tolerance: f64) -> Result<Report, ScenarioError> {
    let mut families = Vec::with_capacity(compiled.families.len());
    for (name, family) in &compiled.families {
        let matrix = histories::decoherence_matrix(family);
        let max_off_diagonal = matrix.max_off_diagonal();
        let diag = matrix.diagonal_distribution();
        let mut probabilities = Vec::with_capacity(diag.len());
        for (key, p) in diag.iter() {
            let outcome: Vec<String> = key
                .0
                .iter()
                .enumerate()
                .map(|(l, &m)| family.observable(l).label(m).to_string())
                .collect();
            probabilities.push(DistributionRow {
                outcome,
                probability: p,
                evolution_probability: None,
                difference: None,
            });
        }
        probabilities.sort_by(|a, b| a.outcome.cmp(&b.outcome));
        families.push(FamilyReport {
            name: name.clone(),
            consistent: max_off_diagonal < tolerance,
            max_off_diagonal,
            probabilities,
        });
    }
    Ok(Report {
        format_version: 1,
        engine: "histories".to_string(),
        tolerance,
        result: ReportResult::Histories { families },
    })
}

fn engine_name(engine: &EngineDecl) -> &'static str {
    match engine {
        EngineDecl::Feynman => "feynman",
        EngineDecl::Evolution => "evolution",
        EngineDecl::Both => "both",
    }
}

fn run_engines(
    chain: &MeasurementChain,
    engine: &EngineDecl,
    tolerance: f64,
) -> Result<(Distribution, Option<Distribution>), ScenarioError> {
    let trace = |_: ()| {
        evolution::chain_distribution(chain)
            .map_err(|e| err(ErrorCode::Internal, "document", e.to_string()))
    };
    let (primary, secondary) = match engine {
        EngineDecl::Feynman => (feynman::chain_distribution(chain), None),
        EngineDecl::Evolution => (trace(())?, None),
        EngineDecl::Both => (feynman::chain_distribution(chain), Some(trace(())?)),
    };
    let total = primary.total_probability();
    if (total - 1.0).abs() > tolerance {
        return Err(err(
            ErrorCode::NumericalInvariant,
            "document",
            format!(
                "probabilities sum to {total:.15} (deviation beyond tolerance {tolerance:.1e})"
            ),
        ));
    }
    Ok((primary, secondary))
}

fn distribution_rows(
    chain: &MeasurementChain,
    primary: &Distribution,
    secondary: Option<&Distribution>,
) -> Vec<DistributionRow> {
    let mut rows = Vec::with_capacity(primary.len());
    for (key, p) in primary.iter() {
        let outcome: Vec<String> = key
            .0
            .iter()
            .enumerate()
            .skip(1)
            .map(|(l, &m)| chain.observable(l).label(m).to_string())
            .collect();
        let evolution_probability = secondary.map(|s| s.probability(key));
        let difference = evolution_probability.map(|e| (p - e).abs());
        rows.push(DistributionRow {
            outcome,
            probability: p,
            evolution_probability,
            difference,
        });
    }
    rows.sort_by(|a, b| a.outcome.cmp(&b.outcome));
    rows
}

/// Run a named built-in experiment. Without a seed the reference parameters
/// are used; with one, parameters are drawn deterministically from it.
pub fn run_builtin(name: &str, seed: Option<u64>) -> Result<Report, ScenarioError> {
    let rows = match name {
        "scenario-a" => {
            let params = builtin_params(seed);
            let result = gedanken::scenario_a(&params)
                .map_err(|e| err(ErrorCode::Internal, "builtin", e.to_string()))?;
            vec![
                builtin_row("P(yes_w)", result.formula.yes, result.simulated.yes),
                builtin_row("P(no_w)", result.formula.no, result.simulated.no),
                builtin_row(
                    "P(not_sure_w)",
                    result.formula.not_sure,
                    result.simulated.not_sure,
                ),
            ]
        }
        "scenario-b" => {
            let params = builtin_params(seed);
            let result = gedanken::scenario_b(&params)
                .map_err(|e| err(ErrorCode::Internal, "builtin", e.to_string()))?;
            let f = &result.formula;
            let s = &result.simulated;
            vec![
                builtin_row("P(yes_w, yes_f)", f.yes_yes, s.yes_yes),
                builtin_row("P(yes_w, no_f)", f.yes_no, s.yes_no),
                builtin_row("P(no_w, yes_f)", f.no_yes, s.no_yes),
                builtin_row("P(no_w, no_f)", f.no_no, s.no_no),
                builtin_row("P(not_sure_w, yes_f)", f.not_sure_yes, s.not_sure_yes),
                builtin_row("P(not_sure_w, no_f)", f.not_sure_no, s.not_sure_no),
                builtin_row("P(yes_w)", f.w_marginal().yes, s.w_marginal().yes),
            ]
        }
        "scenario-c" => {
            let params = builtin_params(seed);
            let result = gedanken::scenario_c(&params)
                .map_err(|e| err(ErrorCode::Internal, "builtin", e.to_string()))?;
            vec![
                builtin_row("P(yes_w)", result.formula.yes, result.simulated.yes),
                builtin_row("P(no_w)", result.formula.no, result.simulated.no),
                builtin_row(
                    "P(not_sure_w)",
                    result.formula.not_sure,
                    result.simulated.not_sure,
                ),
            ]
        }
        "wigner-friend" => {
            let (u_s, u_ds, s0) = match seed {
                None => (
                    hilbert::hadamard(),
                    hilbert::identity(4),
                    hilbert::basis_vector(2, 0),
                ),
                Some(seed) => (
                    hilbert::haar_random_unitary(2, seed),
                    hilbert::haar_random_unitary(4, seed.wrapping_add(1)),
                    hilbert::random_state(2, seed.wrapping_add(2)),
                ),
            };
            let result = gedanken::wigner_friend(&u_s, &u_ds, &s0)
                .map_err(|e| err(ErrorCode::Internal, "builtin", e.to_string()))?;
            let f = &result.formula;
            let s = &result.simulated;
            vec![
                builtin_row("P(yes, then yes)", f.both_yes, s.both_yes),
                builtin_row("P(no, then no)", f.both_no, s.both_no),
                builtin_row("P(yes, then no)", f.yes_then_no, s.yes_then_no),
                builtin_row("P(no, then yes)", f.no_then_yes, s.no_then_yes),
            ]
        }
        "interference" => {
            let u = match seed {
                None => hilbert::hadamard(),
                Some(seed) => hilbert::haar_random_unitary(2, seed),
            };
            let coherent = gedanken::interference_experiment(&u, false)
                .map_err(|e| err(ErrorCode::Internal, "builtin", e.to_string()))?;
            let recorded = gedanken::interference_experiment(&u, true)
                .map_err(|e| err(ErrorCode::Internal, "builtin", e.to_string()))?;
            vec![
                builtin_row("P(return | no record)", coherent.formula, coherent.simulated),
                builtin_row("P(return | record)", recorded.formula, recorded.simulated),
            ]
        }
        "reduced" => {
            let (u_f, u_w) = match seed {
                None => (hilbert::hadamard(), hilbert::identity(2)),
                Some(seed) => (
                    hilbert::haar_random_unitary(2, seed),
                    hilbert::haar_random_unitary(2, seed.wrapping_add(1)),
                ),
            };
            let params = gedanken::TwoObserverParams::new(
                C64::new(1.0, 0.0),
                C64::new(0.0, 0.0),
                hilbert::basis_vector(2, 0),
                u_f,
                u_w,
                hilbert::identity(2),
                hilbert::identity(2),
            )
            .map_err(|e| err(ErrorCode::Internal, "builtin", e.to_string()))?;
            let result = gedanken::reduced_path_probabilities(&params)
                .map_err(|e| err(ErrorCode::Internal, "builtin", e.to_string()))?;
            (0..4)
                .map(|i| {
                    builtin_row(
                        &format!("P(path {})", i + 1),
                        result.formula[i],
                        result.simulated[i],
                    )
                })
                .collect()
        }
        other => {
            return Err(err(
                ErrorCode::BadQuery,
                "builtin",
                format!(
                    "unknown built-in \"{other}\" (expected one of: {})",
                    BUILTIN_NAMES.join(", ")
                ),
            ))
        }
    };
    Ok(Report {
        format_version: 1,
        engine: "builtin".to_string(),
        tolerance: DEFAULT_TOLERANCE,
        result: ReportResult::Builtin {
            name: name.to_string(),
            rows,
        },
    })
}

fn builtin_params(seed: Option<u64>) -> gedanken::TwoObserverParams {
    match seed {
        None => gedanken::TwoObserverParams::hadamard(),
        Some(seed) => gedanken::TwoObserverParams::random(seed),
    }
}

fn builtin_row(quantity: &str, formula: f64, simulated: f64) -> BuiltinRow {
    BuiltinRow {
        quantity: quantity.to_string(),
        formula,
        simulated,
        difference: (formula - simulated).abs(),
    }
}
