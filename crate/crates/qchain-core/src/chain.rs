//! Declarative model of a measurement chain: observables with explicit
//! degeneracy structure, interval unitaries, times, and the initial state.
//!
//! Degeneracy is declared structurally through an assignment map from basis
//! vectors to eigenvalue classes; it is never inferred by comparing
//! floating-point eigenvalues. Times are bookkeeping only — interval
//! evolutions are supplied as explicit unitaries.

use thiserror::Error;

use crate::hilbert::{self, COperator, CVector, C64};

/// Tolerance for unitarity of chain operators and observable bases.
pub const CHAIN_UNITARITY_TOL: f64 = 1e-10;
/// Tolerance for state normalization and mixture weights.
pub const STATE_NORM_TOL: f64 = 1e-12;
/// A pure preparation must overlap a basis column of the initial observable
/// to within this residual.
pub const PREPARATION_MATCH_TOL: f64 = 1e-10;

/// One eigenvalue class: a distinct labeled real value.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenvalueClass {
    pub label: String,
    pub value: f64,
}

impl EigenvalueClass {
    pub fn new(label: impl Into<String>, value: f64) -> Self {
        Self {
            label: label.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ChainError {
    #[error("observable basis is not square ({rows}x{cols})")]
    BasisNotSquare { rows: usize, cols: usize },

    #[error("observable basis fails unitarity at {CHAIN_UNITARITY_TOL:.0e} (deviation {deviation:.3e})")]
    BasisNotUnitary { deviation: f64 },

    #[error("observable needs at least one eigenvalue class")]
    NoClasses,

    #[error("assignment covers {actual} basis vectors, expected {expected}")]
    AssignmentWrongLength { expected: usize, actual: usize },

    #[error("assignment maps basis vector {index} to class {class}, but only {count} classes exist")]
    AssignmentOutOfRange {
        index: usize,
        class: usize,
        count: usize,
    },

    #[error("class {class} (\"{label}\") has no basis vectors assigned")]
    EmptyClass { class: usize, label: String },

    #[error("duplicate eigenvalue label \"{label}\"")]
    DuplicateLabel { label: String },

    #[error("duplicate eigenvalue {value} for labels \"{first}\" and \"{second}\"")]
    DuplicateValue {
        value: f64,
        first: String,
        second: String,
    },

    #[error("class index {index} out of range for {count} classes")]
    ClassOutOfRange { index: usize, count: usize },

    #[error("state norm deviates from 1 by {deviation:.3e}")]
    NotNormalized { deviation: f64 },

    #[error("mixture weight {weight} at component {index} is outside (0, 1]")]
    WeightOutOfRange { index: usize, weight: f64 },

    #[error("mixture weights sum to 1 with deviation {deviation:.3e}")]
    WeightsDoNotSumToOne { deviation: f64 },

    #[error("mixture needs at least one component")]
    EmptyMixture,

    #[error("mixture components have differing dimensions")]
    MixedDimensions,

    #[error("chain is invalid:\n{report}")]
    InvalidChain { report: ValidationReport },
}

/// A measured quantity: an orthonormal eigenbasis plus an assignment of each
/// basis vector to exactly one eigenvalue class.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    dim: usize,
    basis: COperator,
    classes: Vec<EigenvalueClass>,
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
    computational: bool,
}

impl Observable {
    /// Build and validate an observable. `basis` columns are the eigenvectors;
    /// `assignment[n]` names the class of basis vector `n`.
    pub fn new(
        basis: COperator,
        classes: Vec<EigenvalueClass>,
        assignment: Vec<usize>,
    ) -> Result<Self, ChainError> {
        if basis.nrows() != basis.ncols() {
            return Err(ChainError::BasisNotSquare {
                rows: basis.nrows(),
                cols: basis.ncols(),
            });
        }
        let computational = basis == hilbert::identity(basis.nrows());
        if !computational {
            let deviation = hilbert::unitarity_deviation(&basis);
            if deviation >= CHAIN_UNITARITY_TOL {
                return Err(ChainError::BasisNotUnitary { deviation });
            }
        }
        Self::assemble(basis, classes, assignment, computational)
    }

    /// Like [`Observable::new`] but trusting the caller that `basis` is
    /// unitary, for bases assembled from already-verified factors.
    pub(crate) fn new_prechecked(
        basis: COperator,
        classes: Vec<EigenvalueClass>,
        assignment: Vec<usize>,
    ) -> Result<Self, ChainError> {
        let computational = basis == hilbert::identity(basis.nrows());
        Self::assemble(basis, classes, assignment, computational)
    }

    fn assemble(
        basis: COperator,
        classes: Vec<EigenvalueClass>,
        assignment: Vec<usize>,
        computational: bool,
    ) -> Result<Self, ChainError> {
        let dim = basis.nrows();
        if classes.is_empty() {
            return Err(ChainError::NoClasses);
        }
        if assignment.len() != dim {
            return Err(ChainError::AssignmentWrongLength {
                expected: dim,
                actual: assignment.len(),
            });
        }
        let mut members = vec![Vec::new(); classes.len()];
        for (n, &m) in assignment.iter().enumerate() {
            if m >= classes.len() {
                return Err(ChainError::AssignmentOutOfRange {
                    index: n,
                    class: m,
                    count: classes.len(),
                });
            }
            members[m].push(n);
        }
        for (m, mem) in members.iter().enumerate() {
            if mem.is_empty() {
                return Err(ChainError::EmptyClass {
                    class: m,
                    label: classes[m].label.clone(),
                });
            }
        }
        for (i, a) in classes.iter().enumerate() {
            for b in classes.iter().skip(i + 1) {
                if a.label == b.label {
                    return Err(ChainError::DuplicateLabel {
                        label: a.label.clone(),
                    });
                }
                if a.value == b.value {
                    return Err(ChainError::DuplicateValue {
                        value: a.value,
                        first: a.label.clone(),
                        second: b.label.clone(),
                    });
                }
            }
        }
        Ok(Self {
            dim,
            basis,
            classes,
            assignment,
            members,
            computational,
        })
    }

    /// Non-degenerate observable in the computational basis, classes labeled
    /// by basis index.
    pub fn computational(dim: usize) -> Self {
        let classes = (0..dim)
            .map(|n| EigenvalueClass::new(n.to_string(), n as f64))
            .collect();
        Self::new(hilbert::identity(dim), classes, (0..dim).collect())
            .expect("computational observable is always valid")
    }

    /// Computational-basis observable with an explicit class structure.
    pub fn computational_with_classes(
        dim: usize,
        classes: Vec<EigenvalueClass>,
        assignment: Vec<usize>,
    ) -> Result<Self, ChainError> {
        Self::new(hilbert::identity(dim), classes, assignment)
    }

    /// Single-class observable whose projector is the identity.
    pub fn trivial(dim: usize, label: impl Into<String>) -> Self {
        Self::new(
            hilbert::identity(dim),
            vec![EigenvalueClass::new(label, 0.0)],
            vec![0; dim],
        )
        .expect("trivial observable is always valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[EigenvalueClass] {
        &self.classes
    }

    pub fn label(&self, m: usize) -> &str {
        &self.classes[m].label
    }

    pub fn class_of(&self, n: usize) -> usize {
        self.assignment[n]
    }

    pub fn members(&self, m: usize) -> &[usize] {
        &self.members[m]
    }

    pub fn basis(&self) -> &COperator {
        &self.basis
    }

    pub fn basis_column(&self, n: usize) -> CVector {
        self.basis.column(n).into_owned()
    }

    pub fn is_computational(&self) -> bool {
        self.computational
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.members.iter().all(|m| m.len() == 1)
    }

    /// Orthogonal projector onto the eigen-subspace of class `m`.
    pub fn projector(&self, m: usize) -> Result<COperator, ChainError> {
        if m >= self.classes.len() {
            return Err(ChainError::ClassOutOfRange {
                index: m,
                count: self.classes.len(),
            });
        }
        if self.computational {
            let mut p = COperator::zeros(self.dim, self.dim);
            for &n in &self.members[m] {
                p[(n, n)] = C64::new(1.0, 0.0);
            }
            return Ok(p);
        }
        let mut p = COperator::zeros(self.dim, self.dim);
        for &n in &self.members[m] {
            let col = self.basis.column(n);
            p += col * col.adjoint();
        }
        Ok(p)
    }

    /// Look up a class index by its label.
    pub fn class_by_label(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.label == label)
    }
}

/// Component of a mixture: weight and normalized state.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub state: CVector,
}

/// Preparation of a chain: a pure state or a weighted mixture of normalized,
/// not necessarily orthogonal states.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    Pure(CVector),
    Mixed(Vec<MixtureComponent>),
}

impl InitialState {
    pub fn pure(state: CVector) -> Result<Self, ChainError> {
        let deviation = (state.norm() - 1.0).abs();
        if deviation > STATE_NORM_TOL {
            return Err(ChainError::NotNormalized { deviation });
        }
        Ok(Self::Pure(state))
    }

    pub fn mixed(components: Vec<MixtureComponent>) -> Result<Self, ChainError> {
        if components.is_empty() {
            return Err(ChainError::EmptyMixture);
        }
        let dim = components[0].state.len();
        let mut total = 0.0;
        for (index, c) in components.iter().enumerate() {
            if c.state.len() != dim {
                return Err(ChainError::MixedDimensions);
            }
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(ChainError::WeightOutOfRange {
                    index,
                    weight: c.weight,
                });
            }
            let deviation = (c.state.norm() - 1.0).abs();
            if deviation > STATE_NORM_TOL {
                return Err(ChainError::NotNormalized { deviation });
            }
            total += c.weight;
        }
        let deviation = (total - 1.0).abs();
        if deviation > STATE_NORM_TOL {
            return Err(ChainError::WeightsDoNotSumToOne { deviation });
        }
        Ok(Self::Mixed(components))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Pure(v) => v.len(),
            Self::Mixed(cs) => cs[0].state.len(),
        }
    }

    pub fn is_pure(&self) -> bool {
        matches!(self, Self::Pure(_))
    }

    /// Weighted components; a pure state is a single component of weight one.
    pub fn components(&self) -> Vec<(f64, &CVector)> {
        match self {
            Self::Pure(v) => vec![(1.0, v)],
            Self::Mixed(cs) => cs.iter().map(|c| (c.weight, &c.state)).collect(),
        }
    }

    /// Density operator Σ_ν w_ν |q_ν⟩⟨q_ν|.
    pub fn density(&self) -> COperator {
        let dim = self.dim();
        let mut rho = COperator::zeros(dim, dim);
        for (w, v) in self.components() {
            rho += hilbert::outer_product(v, v).scale(w);
        }
        rho
    }
}

/// One invariant violation found while validating a chain.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ChainDefect {
    #[error("non-increasing times at index {index}")]
    NonIncreasingTimes { index: usize },

    #[error("expected {expected} interval unitaries for {steps} steps, got {actual}")]
    WrongUnitaryCount {
        expected: usize,
        steps: usize,
        actual: usize,
    },

    #[error("expected {expected} observables, got {actual}")]
    WrongObservableCount { expected: usize, actual: usize },

    #[error("interval operator {index} has dimension {actual}, chain has {expected}")]
    OperatorDimMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },

    #[error("unitarity violation in interval operator {index}, max deviation {deviation:.3e}")]
    UnitarityViolation { index: usize, deviation: f64 },

    #[error("observable {index} has dimension {actual}, chain has {expected}")]
    ObservableDimMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },

    #[error("no initial state supplied")]
    MissingInitialState,

    #[error("initial state has dimension {actual}, chain has {expected}")]
    InitialStateDimMismatch { expected: usize, actual: usize },

    #[error("pure preparation requires a non-degenerate initial observable")]
    DegeneratePreparation,

    #[error(
        "pure preparation matches no initial-observable basis column \
         (best overlap modulus {best_overlap:.6})"
    )]
    PreparationNotInBasis { best_overlap: f64 },

    #[error("mixed preparation requires the trivial single-class initial observable")]
    MixedPreparationObservableNontrivial,
}

/// Every invariant violation found in a chain under construction; empty iff
/// the chain is valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub defects: Vec<ChainDefect>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.defects.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.defects.is_empty() {
            return write!(f, "valid");
        }
        for (i, d) in self.defects.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "- {d}")?;
        }
        Ok(())
    }
}

/// A validated measurement chain: strictly increasing times `t_0 < … < t_L`,
/// interval unitaries `U_l = U(t_l, t_{l-1})`, one observable per time, and
/// the preparation.
#[derive(Clone, Debug)]
pub struct MeasurementChain {
    dim: usize,
    times: Vec<f64>,
    unitaries: Vec<COperator>,
    observables: Vec<Observable>,
    initial: InitialState,
    preparation_index: Option<usize>,
    preparation_class: usize,
}

impl MeasurementChain {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of measurement steps after the preparation.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Interval unitary `U(t_l, t_{l-1})` for `1 <= l <= steps()`.
    pub fn unitary(&self, l: usize) -> &COperator {
        assert!(l >= 1 && l <= self.steps(), "interval index {l} out of range");
        &self.unitaries[l - 1]
    }

    /// Observable measured at `t_l` for `0 <= l <= steps()`.
    pub fn observable(&self, l: usize) -> &Observable {
        &self.observables[l]
    }

    pub fn initial(&self) -> &InitialState {
        &self.initial
    }

    /// Basis column of the initial observable fixed by a pure preparation.
    pub fn preparation_index(&self) -> Option<usize> {
        self.preparation_index
    }

    /// Class of the initial observable fixed by the preparation (0 for the
    /// trivial observable of a mixed preparation).
    pub fn preparation_class(&self) -> usize {
        self.preparation_class
    }
}

/// Staged chain parts, validated as a whole by [`ChainBuilder::build`].
#[derive(Clone, Debug)]
pub struct ChainBuilder {
    dim: usize,
    times: Vec<f64>,
    unitaries: Vec<COperator>,
    observables: Vec<Observable>,
    initial: Option<InitialState>,
}

impl ChainBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            times: Vec::new(),
            unitaries: Vec::new(),
            observables: Vec::new(),
            initial: None,
        }
    }

    /// Set the preparation: time `t_0`, initial observable, initial state.
    pub fn prepare(mut self, t0: f64, observable: Observable, initial: InitialState) -> Self {
        if self.times.is_empty() {
            self.times.push(t0);
            self.observables.insert(0, observable);
        } else {
            self.times[0] = t0;
            self.observables[0] = observable;
        }
        self.initial = Some(initial);
        self
    }

    /// Append a measurement step: time, interval unitary, observable.
    pub fn step(mut self, t: f64, unitary: COperator, observable: Observable) -> Self {
        self.times.push(t);
        self.unitaries.push(unitary);
        self.observables.push(observable);
        self
    }

    /// List every violated invariant; an empty report means the chain builds.
    pub fn validate(&self) -> ValidationReport {
        let mut defects = Vec::new();
        for i in 1..self.times.len() {
            if self.times[i] <= self.times[i - 1] {
                defects.push(ChainDefect::NonIncreasingTimes { index: i });
            }
        }
        let steps = self.times.len().saturating_sub(1);
        if self.unitaries.len() != steps {
            defects.push(ChainDefect::WrongUnitaryCount {
                expected: steps,
                steps,
                actual: self.unitaries.len(),
            });
        }
        if self.observables.len() != steps + 1 {
            defects.push(ChainDefect::WrongObservableCount {
                expected: steps + 1,
                actual: self.observables.len(),
            });
        }
        for (i, u) in self.unitaries.iter().enumerate() {
            if u.nrows() != self.dim || u.ncols() != self.dim {
                defects.push(ChainDefect::OperatorDimMismatch {
                    index: i + 1,
                    expected: self.dim,
                    actual: u.nrows(),
                });
                continue;
            }
            let deviation = hilbert::unitarity_deviation(u);
            if deviation >= CHAIN_UNITARITY_TOL {
                defects.push(ChainDefect::UnitarityViolation {
                    index: i + 1,
                    deviation,
                });
            }
        }
        for (i, o) in self.observables.iter().enumerate() {
            if o.dim() != self.dim {
                defects.push(ChainDefect::ObservableDimMismatch {
                    index: i,
                    expected: self.dim,
                    actual: o.dim(),
                });
            }
        }
        match (&self.initial, self.observables.first()) {
            (None, _) => defects.push(ChainDefect::MissingInitialState),
            (Some(initial), Some(q0)) if q0.dim() == self.dim => {
                if initial.dim() != self.dim {
                    defects.push(ChainDefect::InitialStateDimMismatch {
                        expected: self.dim,
                        actual: initial.dim(),
                    });
                } else {
                    match initial {
                        InitialState::Pure(psi) => {
                            if !q0.is_nondegenerate() {
                                defects.push(ChainDefect::DegeneratePreparation);
                            }
                            if Self::match_preparation(q0, psi).is_none() {
                                let best = Self::best_overlap(q0, psi);
                                defects.push(ChainDefect::PreparationNotInBasis {
                                    best_overlap: best,
                                });
                            }
                        }
                        InitialState::Mixed(_) => {
                            if q0.num_classes() != 1 {
                                defects.push(ChainDefect::MixedPreparationObservableNontrivial);
                            }
                        }
                    }
                }
            }
            (Some(initial), _) => {
                if initial.dim() != self.dim {
                    defects.push(ChainDefect::InitialStateDimMismatch {
                        expected: self.dim,
                        actual: initial.dim(),
                    });
                }
            }
        }
        ValidationReport { defects }
    }

    /// Validate and freeze the chain.
    pub fn build(self) -> Result<MeasurementChain, ChainError> {
        let report = self.validate();
        if !report.is_valid() {
            return Err(ChainError::InvalidChain { report });
        }
        let (preparation_index, preparation_class) = match self.initial.as_ref().unwrap() {
            InitialState::Pure(psi) => {
                let n0 = Self::match_preparation(&self.observables[0], psi)
                    .expect("validated preparation matches a basis column");
                (Some(n0), self.observables[0].class_of(n0))
            }
            InitialState::Mixed(_) => (None, 0),
        };
        Ok(MeasurementChain {
            dim: self.dim,
            times: self.times,
            unitaries: self.unitaries,
            observables: self.observables,
            initial: self.initial.unwrap(),
            preparation_index,
            preparation_class,
        })
    }

    fn best_overlap(q0: &Observable, psi: &CVector) -> f64 {
        (0..q0.dim())
            .map(|n| q0.basis().column(n).dotc(psi).norm())
            .fold(0.0, f64::max)
    }

    fn match_preparation(q0: &Observable, psi: &CVector) -> Option<usize> {
        (0..q0.dim()).find(|&n| {
            let overlap = q0.basis().column(n).dotc(psi).norm_sqr();
            1.0 - overlap < PREPARATION_MATCH_TOL
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{basis_vector, hadamard, identity};

    fn two_class_observable() -> Observable {
        Observable::computational_with_classes(
            2,
            vec![
                EigenvalueClass::new("one", 1.0),
                EigenvalueClass::new("two", 2.0),
            ],
            vec![0, 1],
        )
        .unwrap()
    }

    #[test]
    fn well_formed_chain_validates_clean() {
        let builder = ChainBuilder::new(2)
            .prepare(
                0.0,
                Observable::computational(2),
                InitialState::pure(basis_vector(2, 0)).unwrap(),
            )
            .step(1.0, hadamard(), two_class_observable())
            .step(2.0, hadamard(), Observable::computational(2));
        let report = builder.validate();
        assert!(report.is_valid(), "unexpected defects: {report}");
        builder.build().unwrap();
    }

    #[test]
    fn equal_times_are_reported_with_index() {
        let report = ChainBuilder::new(2)
            .prepare(
                1.0,
                Observable::computational(2),
                InitialState::pure(basis_vector(2, 0)).unwrap(),
            )
            .step(1.0, hadamard(), two_class_observable())
            .validate();
        assert_eq!(
            report.defects,
            vec![ChainDefect::NonIncreasingTimes { index: 1 }]
        );
        assert!(report.to_string().contains("non-increasing times at index 1"));
    }

    #[test]
    fn non_unitary_interval_is_reported_with_deviation() {
        let mut m = identity(2);
        m[(1, 1)] = C64::new(0.5, 0.0);
        let report = ChainBuilder::new(2)
            .prepare(
                0.0,
                Observable::computational(2),
                InitialState::pure(basis_vector(2, 0)).unwrap(),
            )
            .step(1.0, m, two_class_observable())
            .validate();
        assert!(matches!(
            report.defects[..],
            [ChainDefect::UnitarityViolation { index: 1, .. }]
        ));
        assert!(report.to_string().contains("unitarity violation"));
    }

    #[test]
    fn pure_preparation_must_match_a_basis_column() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = CVector::from_vec(vec![C64::new(h, 0.0), C64::new(h, 0.0)]);
        let report = ChainBuilder::new(2)
            .prepare(
                0.0,
                Observable::computational(2),
                InitialState::pure(plus).unwrap(),
            )
            .step(1.0, hadamard(), two_class_observable())
            .validate();
        assert!(matches!(
            report.defects[..],
            [ChainDefect::PreparationNotInBasis { .. }]
        ));
    }

    #[test]
    fn preparation_class_follows_matched_column() {
        let chain = ChainBuilder::new(2)
            .prepare(
                0.0,
                Observable::computational(2),
                InitialState::pure(basis_vector(2, 1)).unwrap(),
            )
            .step(1.0, hadamard(), two_class_observable())
            .build()
            .unwrap();
        assert_eq!(chain.preparation_index(), Some(1));
        assert_eq!(chain.preparation_class(), 1);
    }

    #[test]
    fn mixed_preparation_requires_trivial_initial_observable() {
        let mixed = InitialState::mixed(vec![
            MixtureComponent {
                weight: 0.25,
                state: basis_vector(2, 0),
            },
            MixtureComponent {
                weight: 0.75,
                state: basis_vector(2, 1),
            },
        ])
        .unwrap();
        let bad = ChainBuilder::new(2)
            .prepare(0.0, Observable::computational(2), mixed.clone())
            .step(1.0, hadamard(), two_class_observable())
            .validate();
        assert!(matches!(
            bad.defects[..],
            [ChainDefect::MixedPreparationObservableNontrivial]
        ));
        let good = ChainBuilder::new(2)
            .prepare(0.0, Observable::trivial(2, "prepared"), mixed)
            .step(1.0, hadamard(), two_class_observable())
            .validate();
        assert!(good.is_valid());
    }

    #[test]
    fn projector_of_computational_class_is_rank_one() {
        let obs = two_class_observable();
        let p = obs.projector(0).unwrap();
        let expected = hilbert::outer_product(&basis_vector(2, 0), &basis_vector(2, 0));
        assert!(hilbert::max_abs_diff(&p, &expected) < 1e-15);
    }

    #[test]
    fn single_class_projector_is_identity() {
        let obs = Observable::trivial(3, "any");
        let p = obs.projector(0).unwrap();
        assert!(hilbert::max_abs_diff(&p, &identity(3)) < 1e-15);
    }

    #[test]
    fn degenerate_memory_class_gives_rank_two_projector() {
        // Memory observable with outcomes yes/no/not_sure/unset on six states;
        // the not-sure class spans two memory states.
        let obs = Observable::computational_with_classes(
            6,
            vec![
                EigenvalueClass::new("unset", 0.0),
                EigenvalueClass::new("yes", 1.0),
                EigenvalueClass::new("no", 2.0),
                EigenvalueClass::new("not_sure", 3.0),
            ],
            vec![0, 1, 2, 3, 3, 0],
        )
        .unwrap();
        let m = obs.class_by_label("not_sure").unwrap();
        let p = obs.projector(m).unwrap();
        let trace: C64 = (0..6).map(|i| p[(i, i)]).sum();
        assert!((trace.re - 2.0).abs() < 1e-15);
        assert!(hilbert::max_abs_diff(&hilbert::matmul(&p, &p), &p) < 1e-14);
        let expected = hilbert::outer_product(&basis_vector(6, 3), &basis_vector(6, 3))
            + hilbert::outer_product(&basis_vector(6, 4), &basis_vector(6, 4));
        assert!(hilbert::max_abs_diff(&p, &expected) < 1e-15);
    }

    #[test]
    fn projectors_resolve_identity_and_are_orthogonal() {
        let basis = hilbert::haar_random_unitary(4, 3);
        let obs = Observable::new(
            basis,
            vec![
                EigenvalueClass::new("a", 1.0),
                EigenvalueClass::new("b", 2.0),
            ],
            vec![0, 1, 0, 1],
        )
        .unwrap();
        let p0 = obs.projector(0).unwrap();
        let p1 = obs.projector(1).unwrap();
        assert!(hilbert::max_abs_diff(&(&p0 + &p1), &identity(4)) < 1e-12);
        let cross = hilbert::matmul(&p0, &p1);
        assert!(cross.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-12);
    }

    #[test]
    fn observable_rejects_structural_defects() {
        assert!(matches!(
            Observable::new(identity(2), vec![EigenvalueClass::new("a", 1.0)], vec![0]),
            Err(ChainError::AssignmentWrongLength { .. })
        ));
        assert!(matches!(
            Observable::new(
                identity(2),
                vec![
                    EigenvalueClass::new("a", 1.0),
                    EigenvalueClass::new("a", 2.0)
                ],
                vec![0, 1]
            ),
            Err(ChainError::DuplicateLabel { .. })
        ));
        assert!(matches!(
            Observable::new(
                identity(2),
                vec![
                    EigenvalueClass::new("a", 1.0),
                    EigenvalueClass::new("b", 1.0)
                ],
                vec![0, 1]
            ),
            Err(ChainError::DuplicateValue { .. })
        ));
        assert!(matches!(
            Observable::new(
                identity(2),
                vec![
                    EigenvalueClass::new("a", 1.0),
                    EigenvalueClass::new("b", 2.0)
                ],
                vec![0, 0]
            ),
            Err(ChainError::EmptyClass { .. })
        ));
        let mut skewed = identity(2);
        skewed[(0, 1)] = C64::new(0.5, 0.0);
        assert!(matches!(
            Observable::new(
                skewed,
                vec![EigenvalueClass::new("a", 1.0)],
                vec![0, 0]
            ),
            Err(ChainError::BasisNotUnitary { .. })
        ));
    }

    #[test]
    fn mixture_validation_catches_bad_weights() {
        let c = |w| MixtureComponent {
            weight: w,
            state: basis_vector(2, 0),
        };
        assert!(matches!(
            InitialState::mixed(vec![c(0.5), c(0.6)]),
            Err(ChainError::WeightsDoNotSumToOne { .. })
        ));
        assert!(matches!(
            InitialState::mixed(vec![c(-0.1), c(1.1)]),
            Err(ChainError::WeightOutOfRange { .. })
        ));
        assert!(matches!(
            InitialState::mixed(vec![]),
            Err(ChainError::EmptyMixture)
        ));
    }
}
