//! Branch states, the decoherence Gram matrix, consistency verdicts, and
//! observer augmentation for history families.
//!
//! A history family applies one complete projector set per time, including
//! the final time. Pairwise inner products of the projected branch states
//! form a Hermitian Gram matrix; the family is consistent when every
//! off-diagonal entry vanishes, and the diagonal then carries the history
//! probabilities. Tagging each time with a probe (and optionally a memory)
//! makes any family consistent, at which point the diagonal reproduces the
//! measurement-chain probabilities of the same protocol.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::apparatus::{
    register_gate, ApparatusError, CompositeSpace, CouplingSpec, Factor, FactorRole,
};
use crate::chain::{
    ChainBuilder, ChainError, EigenvalueClass, InitialState, MeasurementChain, Observable,
    CHAIN_UNITARITY_TOL,
};
use crate::dist::{Distribution, OutcomeSequence};
use crate::hilbert::{self, COperator, CVector, C64};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum HistoriesError {
    #[error("initial state norm deviates from 1 by {deviation:.3e}")]
    NotNormalized { deviation: f64 },

    #[error("need one projector set per step: {unitaries} unitaries, {observables} observables")]
    CountMismatch {
        unitaries: usize,
        observables: usize,
    },

    #[error("family needs at least one projected time")]
    Empty,

    #[error("operator {index} has dimension {actual}, family has {expected}")]
    DimMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },

    #[error("unitarity violation in operator {index}, max deviation {deviation:.3e}")]
    NotUnitary { index: usize, deviation: f64 },

    #[error("outcome tuple has {actual} entries, family has {expected} times")]
    OutcomeLength { expected: usize, actual: usize },

    #[error("class {class} at time {time} out of range ({count} classes)")]
    ClassOutOfRange {
        time: usize,
        class: usize,
        count: usize,
    },

    #[error("need one augmentation mode per time: {expected}, got {actual}")]
    ModeCount { expected: usize, actual: usize },

    #[error(transparent)]
    Apparatus(#[from] ApparatusError),

    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Initial state, interval unitaries, and one complete projector set per
/// time `t_1 … t_L` (the final time included).
#[derive(Clone, Debug)]
pub struct HistoryFamily {
    dim: usize,
    initial: CVector,
    unitaries: Vec<COperator>,
    observables: Vec<Observable>,
}

impl HistoryFamily {
    pub fn new(
        initial: CVector,
        unitaries: Vec<COperator>,
        observables: Vec<Observable>,
    ) -> Result<Self, HistoriesError> {
        let dim = initial.len();
        let deviation = (initial.norm() - 1.0).abs();
        if deviation > 1e-12 {
            return Err(HistoriesError::NotNormalized { deviation });
        }
        if unitaries.len() != observables.len() {
            return Err(HistoriesError::CountMismatch {
                unitaries: unitaries.len(),
                observables: observables.len(),
            });
        }
        if unitaries.is_empty() {
            return Err(HistoriesError::Empty);
        }
        for (index, u) in unitaries.iter().enumerate() {
            if u.nrows() != dim || u.ncols() != dim {
                return Err(HistoriesError::DimMismatch {
                    index,
                    expected: dim,
                    actual: u.nrows(),
                });
            }
            let deviation = hilbert::unitarity_deviation(u);
            if deviation >= CHAIN_UNITARITY_TOL {
                return Err(HistoriesError::NotUnitary { index, deviation });
            }
        }
        for (index, o) in observables.iter().enumerate() {
            if o.dim() != dim {
                return Err(HistoriesError::DimMismatch {
                    index,
                    expected: dim,
                    actual: o.dim(),
                });
            }
        }
        Ok(Self {
            dim,
            initial,
            unitaries,
            observables,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of projected times.
    pub fn len(&self) -> usize {
        self.unitaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unitaries.is_empty()
    }

    pub fn initial(&self) -> &CVector {
        &self.initial
    }

    pub fn unitary(&self, l: usize) -> &COperator {
        &self.unitaries[l]
    }

    pub fn observable(&self, l: usize) -> &Observable {
        &self.observables[l]
    }

    /// Outcome tuples in lexicographic order.
    pub fn outcome_tuples(&self) -> Vec<OutcomeSequence> {
        let mut out = vec![Vec::new()];
        for o in &self.observables {
            let mut next = Vec::with_capacity(out.len() * o.num_classes());
            for prefix in &out {
                for m in 0..o.num_classes() {
                    let mut tuple = prefix.clone();
                    tuple.push(m);
                    next.push(tuple);
                }
            }
            out = next;
        }
        out.into_iter().map(OutcomeSequence::new).collect()
    }

    /// The measurement chain running this family's unitaries and projector
    /// sets as perceived outcomes.
    pub fn to_chain(&self) -> Result<MeasurementChain, HistoriesError> {
        let basis = hilbert::complete_basis(&[self.initial.clone()], self.dim).map_err(|_| {
            HistoriesError::NotNormalized {
                deviation: (self.initial.norm() - 1.0).abs(),
            }
        })?;
        let classes = (0..self.dim)
            .map(|n| EigenvalueClass::new(format!("p{n}"), n as f64))
            .collect();
        let q0 = Observable::new_prechecked(basis, classes, (0..self.dim).collect())?;
        let mut builder = ChainBuilder::new(self.dim).prepare(
            0.0,
            q0,
            InitialState::pure(self.initial.clone())?,
        );
        for (l, (u, o)) in self.unitaries.iter().zip(&self.observables).enumerate() {
            builder = builder.step((l + 1) as f64, u.clone(), o.clone());
        }
        Ok(builder.build()?)
    }
}

/// Unnormalized branch state: the full projector chain applied to the
/// initial state, final projector included.
pub fn branch_state(
    family: &HistoryFamily,
    outcomes: &[usize],
) -> Result<CVector, HistoriesError> {
    if outcomes.len() != family.len() {
        return Err(HistoriesError::OutcomeLength {
            expected: family.len(),
            actual: outcomes.len(),
        });
    }
    let mut state = family.initial.clone();
    for (l, &m) in outcomes.iter().enumerate() {
        let obs = family.observable(l);
        if m >= obs.num_classes() {
            return Err(HistoriesError::ClassOutOfRange {
                time: l,
                class: m,
                count: obs.num_classes(),
            });
        }
        state = family.unitary(l) * state;
        state = project_class(obs, m, &state);
    }
    Ok(state)
}

fn project_class(obs: &Observable, m: usize, state: &CVector) -> CVector {
    if obs.is_computational() {
        let mut out = CVector::zeros(state.len());
        for &n in obs.members(m) {
            out[n] = state[n];
        }
        out
    } else {
        let coeffs = obs.basis().adjoint() * state;
        let mut out = CVector::zeros(state.len());
        for &n in obs.members(m) {
            out.axpy(coeffs[n], &obs.basis().column(n), C64::new(1.0, 0.0));
        }
        out
    }
}

/// Gram matrix of all branch states, outcome tuples in lexicographic order.
#[derive(Clone, Debug)]
pub struct DecoherenceMatrix {
    pub outcomes: Vec<OutcomeSequence>,
    pub gram: COperator,
}

impl DecoherenceMatrix {
    /// History probabilities: the diagonal, keyed by outcome tuple.
    pub fn diagonal_distribution(&self) -> Distribution {
        let mut raw = BTreeMap::new();
        for (i, outcome) in self.outcomes.iter().enumerate() {
            raw.insert(outcome.clone(), self.gram[(i, i)].re);
        }
        Distribution::from_raw(raw).expect("branch norms are non-negative")
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.gram.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    worst = worst.max(self.gram[(i, j)].norm());
                }
            }
        }
        worst
    }

    pub fn trace(&self) -> f64 {
        (0..self.gram.nrows()).map(|i| self.gram[(i, i)].re).sum()
    }
}

/// Pairwise inner products of every branch state.
pub fn decoherence_matrix(family: &HistoryFamily) -> DecoherenceMatrix {
    let outcomes = family.outcome_tuples();
    let branches: Vec<CVector> = outcomes
        .iter()
        .map(|o| branch_state(family, &o.0).expect("enumerated outcomes are in range"))
        .collect();
    let n = branches.len();
    let mut gram = COperator::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            gram[(i, j)] = branches[j].dotc(&branches[i]);
        }
    }
    DecoherenceMatrix { outcomes, gram }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsistencyVerdict {
    pub consistent: bool,
    pub max_off_diagonal: f64,
}

/// A family is consistent when every off-diagonal Gram entry stays below
/// `tol` in magnitude.
pub fn consistency_check(family: &HistoryFamily, tol: f64) -> ConsistencyVerdict {
    let gram = decoherence_matrix(family);
    let max_off_diagonal = gram.max_off_diagonal();
    ConsistencyVerdict {
        consistent: max_off_diagonal < tol,
        max_off_diagonal,
    }
}

/// How much observation machinery one time of a family receives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObserverAugmentation {
    /// Bare projectors, no extra factors.
    None,
    /// A pointer probe coupled before the time, projected alongside it.
    Probe,
    /// Probe plus a memory register recording the probe.
    ProbeAndMemory,
}

/// Enlarge a system-only family with probe (and memory) factors at the
/// selected times. Projectors at augmented times become products of the
/// matching memory, probe, and system projectors plus a never-populated
/// rest class; interval unitaries gain the coupling and registration steps.
pub fn augment_with_observers(
    family: &HistoryFamily,
    modes: &[ObserverAugmentation],
) -> Result<HistoryFamily, HistoriesError> {
    if modes.len() != family.len() {
        return Err(HistoriesError::ModeCount {
            expected: family.len(),
            actual: modes.len(),
        });
    }
    let mut factors = Vec::new();
    for (l, mode) in modes.iter().enumerate() {
        let states = family.observable(l).num_classes() + 1;
        match mode {
            ObserverAugmentation::None => {}
            ObserverAugmentation::Probe => {
                factors.push(Factor::new(format!("d{}", l + 1), states, FactorRole::Probe));
            }
            ObserverAugmentation::ProbeAndMemory => {
                factors.push(Factor::new(
                    format!("mu{}", l + 1),
                    states,
                    FactorRole::Memory,
                ));
                factors.push(Factor::new(format!("d{}", l + 1), states, FactorRole::Probe));
            }
        }
    }
    factors.push(Factor::new("s", family.dim(), FactorRole::System));
    let space = CompositeSpace::new(factors)?;

    // Initial state: everything at rest, the system in the bare initial.
    let mut initial = CVector::from_element(1, C64::new(1.0, 0.0));
    for f in space.factors() {
        let part = if f.label == "s" {
            family.initial.clone()
        } else {
            hilbert::basis_vector(f.dim, 0)
        };
        initial = hilbert::tensor_product_vec(&initial, &part)
            .expect("space construction already enforced the dimension cap");
    }

    let mut unitaries = Vec::with_capacity(family.len());
    let mut observables = Vec::with_capacity(family.len());
    for (l, mode) in modes.iter().enumerate() {
        let bare = family.observable(l);
        let probe = format!("d{}", l + 1);
        let memory = format!("mu{}", l + 1);

        let mut u = hilbert::identity(space.dim());
        space.apply_to_columns(family.unitary(l), &["s"], &mut u)?;
        if *mode != ObserverAugmentation::None {
            let spec = CouplingSpec::new(probe.clone(), vec!["s".into()], bare.clone(), 0.0);
            let gate = spec.gate(&space)?;
            space.apply_to_columns(&gate, &[&probe, "s"], &mut u)?;
        }
        if *mode == ObserverAugmentation::ProbeAndMemory {
            let (gate, _, _) = register_gate(&space, &memory, &probe)?;
            space.apply_to_columns(&gate, &[&memory, &probe], &mut u)?;
        }
        unitaries.push(u);

        observables.push(augmented_observable(&space, family, l, *mode)?);
    }
    HistoryFamily::new(initial, unitaries, observables)
}

fn augmented_observable(
    space: &CompositeSpace,
    family: &HistoryFamily,
    l: usize,
    mode: ObserverAugmentation,
) -> Result<Observable, HistoriesError> {
    let bare = family.observable(l);
    let basis = space.embed(bare.basis(), &["s"])?;
    let s_idx = space.factor_index("s")?;

    let mut classes: Vec<EigenvalueClass> = bare.classes().to_vec();
    if mode != ObserverAugmentation::None {
        let mut label = "rest".to_string();
        while classes.iter().any(|c| c.label == label) {
            label.push('_');
        }
        let value = classes.iter().map(|c| c.value).fold(f64::INFINITY, f64::min) - 1.0;
        classes.push(EigenvalueClass::new(label, value));
    }
    let rest = bare.num_classes();

    let probe_idx = match mode {
        ObserverAugmentation::None => None,
        _ => Some(space.factor_index(&format!("d{}", l + 1))?),
    };
    let memory_idx = match mode {
        ObserverAugmentation::ProbeAndMemory => Some(space.factor_index(&format!("mu{}", l + 1))?),
        _ => None,
    };

    let assignment: Vec<usize> = (0..space.dim())
        .map(|idx| {
            let c = bare.class_of(space.digit(idx, s_idx));
            if let Some(p) = probe_idx {
                if space.digit(idx, p) != c + 1 {
                    return rest;
                }
            }
            if let Some(m) = memory_idx {
                if space.digit(idx, m) != c + 1 {
                    return rest;
                }
            }
            c
        })
        .collect();
    Ok(Observable::new_prechecked(basis, classes, assignment)?)
}

/// Largest gap between the two distributions after grouping each by its
/// final outcome slot; zero when the marginal relation holds.
pub fn marginal_check(full: &Distribution, marginal: &Distribution) -> f64 {
    full.last_component_marginal()
        .max_abs_diff(&marginal.last_component_marginal())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feynman;
    use crate::hilbert::{basis_vector, haar_random_unitary, identity, max_abs_diff_vec};

    fn plus_state() -> CVector {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        CVector::from_vec(vec![C64::new(h, 0.0), C64::new(h, 0.0)])
    }

    fn plus_minus_observable() -> Observable {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let basis = COperator::from_row_slice(
            2,
            2,
            &[
                C64::new(h, 0.0),
                C64::new(h, 0.0),
                C64::new(h, 0.0),
                C64::new(-h, 0.0),
            ],
        );
        Observable::new(
            basis,
            vec![
                EigenvalueClass::new("plus", 1.0),
                EigenvalueClass::new("minus", -1.0),
            ],
            vec![0, 1],
        )
        .unwrap()
    }

    /// The two-time family measuring the computational basis, then the
    /// diagonal basis, on a diagonal initial state with no dynamics.
    fn plus_family() -> HistoryFamily {
        HistoryFamily::new(
            plus_state(),
            vec![identity(2), identity(2)],
            vec![Observable::computational(2), plus_minus_observable()],
        )
        .unwrap()
    }

    #[test]
    fn branch_of_projector_onto_initial_is_the_initial() {
        let family = HistoryFamily::new(
            plus_state(),
            vec![identity(2)],
            vec![plus_minus_observable()],
        )
        .unwrap();
        let branch = branch_state(&family, &[0]).unwrap();
        assert!(max_abs_diff_vec(&branch, &plus_state()) < 1e-14);
    }

    #[test]
    fn plus_family_branch_is_half_plus() {
        let branch = branch_state(&plus_family(), &[0, 0]).unwrap();
        let expected = plus_state().scale(0.5);
        assert!(max_abs_diff_vec(&branch, &expected) < 1e-14);
    }

    #[test]
    fn identity_classes_propagate_freely() {
        let u = haar_random_unitary(3, 5);
        let family = HistoryFamily::new(
            basis_vector(3, 0),
            vec![u.clone()],
            vec![Observable::trivial(3, "all")],
        )
        .unwrap();
        let branch = branch_state(&family, &[0]).unwrap();
        let expected = &u * basis_vector(3, 0);
        assert!(max_abs_diff_vec(&branch, &expected) < 1e-14);
    }

    #[test]
    fn common_eigenbasis_family_is_diagonal() {
        let basis = haar_random_unitary(3, 9);
        let obs = Observable::new(
            basis,
            (0..3)
                .map(|n| EigenvalueClass::new(n.to_string(), n as f64))
                .collect(),
            vec![0, 1, 2],
        )
        .unwrap();
        let family = HistoryFamily::new(
            obs.basis_column(1),
            vec![identity(3), identity(3)],
            vec![obs.clone(), obs],
        )
        .unwrap();
        let dm = decoherence_matrix(&family);
        assert!(dm.max_off_diagonal() < 1e-12);
        assert!((dm.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plus_family_has_quarter_off_diagonal() {
        let dm = decoherence_matrix(&plus_family());
        // Branches (0,plus) and (1,plus) overlap at 1/4.
        let i = dm
            .outcomes
            .iter()
            .position(|o| o.0 == vec![0, 0])
            .unwrap();
        let j = dm
            .outcomes
            .iter()
            .position(|o| o.0 == vec![1, 0])
            .unwrap();
        assert!((dm.gram[(i, j)].norm() - 0.25).abs() < 1e-12);
        assert!((dm.trace() - 1.0).abs() < 1e-12);

        let verdict = consistency_check(&plus_family(), 1e-10);
        assert!(!verdict.consistent);
        assert!((verdict.max_off_diagonal - 0.25).abs() < 1e-12);
    }

    #[test]
    fn augmentation_restores_consistency_and_chain_probabilities() {
        let family = plus_family();
        let augmented = augment_with_observers(
            &family,
            &[
                ObserverAugmentation::ProbeAndMemory,
                ObserverAugmentation::ProbeAndMemory,
            ],
        )
        .unwrap();
        let verdict = consistency_check(&augmented, 1e-10);
        assert!(verdict.consistent, "off-diagonal {}", verdict.max_off_diagonal);

        let diag = decoherence_matrix(&augmented).diagonal_distribution();
        let chain = augmented.to_chain().unwrap();
        let engine = feynman::chain_distribution(&chain).without_first_component();
        assert!(diag.max_abs_diff(&engine) < 1e-12);

        // The four histories are uniform at 1/4.
        for m1 in 0..2 {
            for m2 in 0..2 {
                let p = diag.probability(&OutcomeSequence::new(vec![m1, m2]));
                assert!((p - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn augmenting_a_consistent_family_preserves_probabilities() {
        let basis = haar_random_unitary(2, 31);
        let obs = Observable::new(
            basis,
            vec![
                EigenvalueClass::new("a", 0.0),
                EigenvalueClass::new("b", 1.0),
            ],
            vec![0, 1],
        )
        .unwrap();
        let family = HistoryFamily::new(
            obs.basis_column(0),
            vec![identity(2), identity(2)],
            vec![obs.clone(), obs],
        )
        .unwrap();
        assert!(consistency_check(&family, 1e-10).consistent);
        let bare = decoherence_matrix(&family).diagonal_distribution();

        let augmented = augment_with_observers(
            &family,
            &[
                ObserverAugmentation::ProbeAndMemory,
                ObserverAugmentation::ProbeAndMemory,
            ],
        )
        .unwrap();
        let dressed = decoherence_matrix(&augmented).diagonal_distribution();
        // The rest classes never fire, so comparing common keys suffices.
        for (key, p) in bare.iter() {
            assert!((dressed.probability(key) - p).abs() < 1e-12);
        }
        assert!((dressed.total_probability() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn augmenting_nothing_is_the_identity_transform() {
        let family = plus_family();
        let untouched = augment_with_observers(
            &family,
            &[ObserverAugmentation::None, ObserverAugmentation::None],
        )
        .unwrap();
        assert_eq!(untouched.dim(), family.dim());
        assert!(max_abs_diff_vec(untouched.initial(), family.initial()) < 1e-15);
        for l in 0..family.len() {
            assert!(
                hilbert::max_abs_diff(untouched.unitary(l), family.unitary(l)) < 1e-15
            );
        }
        let a = decoherence_matrix(&family);
        let b = decoherence_matrix(&untouched);
        assert!(hilbert::max_abs_diff(&a.gram, &b.gram) < 1e-15);
    }

    #[test]
    fn unregistered_probes_satisfy_the_marginal_relation() {
        // Probes at the intermediate time, probe and memory at the last:
        // summing the history probabilities over the intermediate outcome
        // reproduces the final observer's odds.
        let family = plus_family();
        let augmented = augment_with_observers(
            &family,
            &[
                ObserverAugmentation::Probe,
                ObserverAugmentation::ProbeAndMemory,
            ],
        )
        .unwrap();
        let full = decoherence_matrix(&augmented).diagonal_distribution();

        // Single-observer oracle: same couplings, one perceived outcome.
        let total = hilbert::matmul(augmented.unitary(1), augmented.unitary(0));
        let single = HistoryFamily::new(
            augmented.initial().clone(),
            vec![total],
            vec![augmented.observable(1).clone()],
        )
        .unwrap();
        let marginal = decoherence_matrix(&single).diagonal_distribution();
        assert!(marginal_check(&full, &marginal) < 1e-10);
    }

    #[test]
    fn solo_final_observer_is_not_a_marginal_of_the_full_family() {
        // Full augmentation gives the uniform 1/4 histories; a final-time
        // observer alone sees the undisturbed interference. The reported
        // deviation for the diagonal family is exactly one half.
        let family = plus_family();
        let all = augment_with_observers(
            &family,
            &[
                ObserverAugmentation::ProbeAndMemory,
                ObserverAugmentation::ProbeAndMemory,
            ],
        )
        .unwrap();
        let p_all = decoherence_matrix(&all).diagonal_distribution();

        let solo = HistoryFamily::new(
            plus_state(),
            vec![identity(2)],
            vec![plus_minus_observable()],
        )
        .unwrap();
        let solo_aug =
            augment_with_observers(&solo, &[ObserverAugmentation::ProbeAndMemory]).unwrap();
        let p_one = decoherence_matrix(&solo_aug).diagonal_distribution();

        let deviation = marginal_check(&p_all, &p_one);
        assert!((deviation - 0.5).abs() < 1e-12);
    }

    #[test]
    fn augmentation_always_restores_consistency() {
        for seed in 0..5 {
            let family = HistoryFamily::new(
                hilbert::random_state(2, 500 + seed),
                vec![
                    haar_random_unitary(2, 600 + seed),
                    haar_random_unitary(2, 700 + seed),
                ],
                vec![Observable::computational(2), plus_minus_observable()],
            )
            .unwrap();
            let augmented = augment_with_observers(
                &family,
                &[
                    ObserverAugmentation::ProbeAndMemory,
                    ObserverAugmentation::ProbeAndMemory,
                ],
            )
            .unwrap();
            let verdict = consistency_check(&augmented, 1e-10);
            assert!(verdict.consistent, "seed {seed}: {}", verdict.max_off_diagonal);

            let dm = decoherence_matrix(&augmented);
            assert!((dm.trace() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn gram_matrix_is_hermitian() {
        let family = plus_family();
        let dm = decoherence_matrix(&family);
        assert!(hilbert::max_abs_diff(&dm.gram, &dm.gram.adjoint()) < 1e-14);
    }

    #[test]
    fn rejects_malformed_families() {
        assert!(matches!(
            HistoryFamily::new(
                plus_state().scale(2.0),
                vec![identity(2)],
                vec![Observable::computational(2)]
            ),
            Err(HistoriesError::NotNormalized { .. })
        ));
        assert!(matches!(
            HistoryFamily::new(plus_state(), vec![identity(2)], vec![]),
            Err(HistoriesError::CountMismatch { .. })
        ));
        let mut skew = identity(2);
        skew[(0, 0)] = C64::new(2.0, 0.0);
        assert!(matches!(
            HistoryFamily::new(plus_state(), vec![skew], vec![Observable::computational(2)]),
            Err(HistoriesError::NotUnitary { .. })
        ));
    }
}
