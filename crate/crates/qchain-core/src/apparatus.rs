//! Composite spaces and the unitary machinery of observation: pointer
//! couplings, memory registration, coupling reversal, and the tagging
//! decomposition with trace-over-probes readout.
//!
//! A pointer probe tagging `M` classes uses `M + 1` orthogonal states: the
//! rest state `|d_0⟩` plus one outcome state per class. The coupling sends
//! `|d_0⟩ ⊗ |s⟩ → Σ_m |d_{m+1}⟩ ⊗ π_m|s⟩` and is completed to a unitary by
//! a modular shift of the pointer index within the first `M + 1` states,
//! leaving any additional pointer states untouched. Memory registration
//! copies the pointer index into a memory factor by the same modular-shift
//! scheme. Probes and memories carry no dynamics of their own; all interval
//! evolution acts on whichever factors an event names.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::chain::Observable;
use crate::dist::{Distribution, OutcomeSequence};
use crate::hilbert::{self, COperator, CVector, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorRole {
    System,
    Probe,
    Memory,
}

/// One tensor factor of a composite space.
#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    pub label: String,
    pub dim: usize,
    pub role: FactorRole,
}

impl Factor {
    pub fn new(label: impl Into<String>, dim: usize, role: FactorRole) -> Self {
        Self {
            label: label.into(),
            dim,
            role,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ApparatusError {
    #[error("duplicate factor label \"{label}\"")]
    DuplicateLabel { label: String },

    #[error("factor \"{label}\" has dimension {dim}, need at least 2")]
    FactorTooSmall { label: String, dim: usize },

    #[error("composite dimension {dim} exceeds cap {cap} (override with QCHAIN_DIM_CAP)")]
    CapacityExceeded { dim: usize, cap: usize },

    #[error("unknown factor label \"{label}\"")]
    UnknownLabel { label: String },

    #[error("factor list names \"{label}\" twice")]
    RepeatedFactor { label: String },

    #[error("operator dimension {actual} does not match factor product {expected}")]
    OperatorDimMismatch { expected: usize, actual: usize },

    #[error("state dimension {actual} does not match composite dimension {expected}")]
    StateDimMismatch { expected: usize, actual: usize },

    #[error("probe \"{label}\" has {dim} states, coupling to {classes} classes needs {}", classes + 1)]
    ProbeTooSmall {
        label: String,
        dim: usize,
        classes: usize,
    },

    #[error("partition acts on dimension {actual}, target factors have dimension {expected}")]
    PartitionDimMismatch { expected: usize, actual: usize },

    #[error("partition projectors complete to identity only within {deviation:.3e}")]
    IncompletePartition { deviation: f64 },

    #[error("memory \"{memory}\" has {memory_dim} states, probe \"{probe}\" has {probe_dim}")]
    MemoryTooSmall {
        memory: String,
        memory_dim: usize,
        probe: String,
        probe_dim: usize,
    },

    #[error("events are not time-ordered at position {position}")]
    UnorderedEvents { position: usize },

    #[error("factor \"{label}\" is not fixed and not kept")]
    UnresolvedFactor { label: String },

    #[error(transparent)]
    Observable(#[from] crate::chain::ChainError),
}

/// Ordered list of labeled tensor factors; indices follow the big-endian
/// Kronecker convention of [`crate::hilbert`].
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeSpace {
    factors: Vec<Factor>,
    /// Per-factor stride: product of the dimensions of all later factors.
    strides: Vec<usize>,
    dim: usize,
}

impl CompositeSpace {
    pub fn new(factors: Vec<Factor>) -> Result<Self, ApparatusError> {
        for (i, f) in factors.iter().enumerate() {
            if f.dim < 2 {
                return Err(ApparatusError::FactorTooSmall {
                    label: f.label.clone(),
                    dim: f.dim,
                });
            }
            if factors[..i].iter().any(|g| g.label == f.label) {
                return Err(ApparatusError::DuplicateLabel {
                    label: f.label.clone(),
                });
            }
        }
        let dim: usize = factors.iter().map(|f| f.dim).product();
        let cap = hilbert::dim_cap();
        if dim > cap {
            return Err(ApparatusError::CapacityExceeded { dim, cap });
        }
        let mut strides = vec![1usize; factors.len()];
        for i in (0..factors.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * factors[i + 1].dim;
        }
        Ok(Self {
            factors,
            strides,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor_index(&self, label: &str) -> Result<usize, ApparatusError> {
        self.factors
            .iter()
            .position(|f| f.label == label)
            .ok_or_else(|| ApparatusError::UnknownLabel {
                label: label.to_string(),
            })
    }

    pub fn factor_dim(&self, index: usize) -> usize {
        self.factors[index].dim
    }

    /// Digit of `index` belonging to factor `factor`.
    pub fn digit(&self, index: usize, factor: usize) -> usize {
        (index / self.strides[factor]) % self.factors[factor].dim
    }

    fn resolve(&self, labels: &[&str]) -> Result<Vec<usize>, ApparatusError> {
        let mut indices = Vec::with_capacity(labels.len());
        for &label in labels {
            let idx = self.factor_index(label)?;
            if indices.contains(&idx) {
                return Err(ApparatusError::RepeatedFactor {
                    label: label.to_string(),
                });
            }
            indices.push(idx);
        }
        Ok(indices)
    }

    fn subset_dim(&self, indices: &[usize]) -> usize {
        indices.iter().map(|&i| self.factors[i].dim).product()
    }

    /// Offsets of the gate's sub-basis inside the composite index, and the
    /// offsets of all composite indices whose gate digits are zero.
    fn gather_plan(&self, indices: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let g = self.subset_dim(indices);
        let mut gate_offsets = vec![0usize; g];
        for t in 0..g {
            let mut rem = t;
            let mut off = 0;
            for &f in indices.iter().rev() {
                let d = self.factors[f].dim;
                off += (rem % d) * self.strides[f];
                rem /= d;
            }
            gate_offsets[t] = off;
        }
        let mut rest_offsets = Vec::with_capacity(self.dim / g);
        'outer: for idx in 0..self.dim {
            for &f in indices {
                if self.digit(idx, f) != 0 {
                    continue 'outer;
                }
            }
            rest_offsets.push(idx);
        }
        (gate_offsets, rest_offsets)
    }

    fn check_gate(&self, gate: &COperator, indices: &[usize]) -> Result<(), ApparatusError> {
        let g = self.subset_dim(indices);
        if gate.nrows() != g || gate.ncols() != g {
            return Err(ApparatusError::OperatorDimMismatch {
                expected: g,
                actual: gate.nrows(),
            });
        }
        Ok(())
    }

    /// Apply a gate on the named factors (gate indices big-endian in list
    /// order) to a composite state, in place.
    pub fn apply_to_vector(
        &self,
        gate: &COperator,
        labels: &[&str],
        state: &mut CVector,
    ) -> Result<(), ApparatusError> {
        let indices = self.resolve(labels)?;
        self.check_gate(gate, &indices)?;
        if state.len() != self.dim {
            return Err(ApparatusError::StateDimMismatch {
                expected: self.dim,
                actual: state.len(),
            });
        }
        self.apply_to_slice(gate, &indices, state.as_mut_slice());
        Ok(())
    }

    /// Left-multiply the embedded gate into `target`, column by column.
    pub fn apply_to_columns(
        &self,
        gate: &COperator,
        labels: &[&str],
        target: &mut COperator,
    ) -> Result<(), ApparatusError> {
        let indices = self.resolve(labels)?;
        self.check_gate(gate, &indices)?;
        if target.nrows() != self.dim {
            return Err(ApparatusError::StateDimMismatch {
                expected: self.dim,
                actual: target.nrows(),
            });
        }
        let ncols = target.ncols();
        if self.is_trailing_block(&indices) {
            // Trailing factors are the fast indices, so the whole buffer is a
            // g x (dim/g * ncols) column-major matrix and one gemm suffices.
            let g = self.subset_dim(&indices);
            let cols = self.dim / g * ncols;
            apply_gate_gemm(gate, target.as_mut_slice(), g, cols);
            return Ok(());
        }
        let (gate_offsets, rest_offsets) = self.gather_plan(&indices);
        let data = target.as_mut_slice();
        for c in 0..ncols {
            let col = &mut data[c * self.dim..(c + 1) * self.dim];
            apply_gate_strided(gate, &gate_offsets, &rest_offsets, col);
        }
        Ok(())
    }

    fn apply_to_slice(&self, gate: &COperator, indices: &[usize], data: &mut [C64]) {
        if self.is_trailing_block(indices) {
            let g = self.subset_dim(indices);
            apply_gate_gemm(gate, data, g, self.dim / g);
            return;
        }
        let (gate_offsets, rest_offsets) = self.gather_plan(indices);
        apply_gate_strided(gate, &gate_offsets, &rest_offsets, data);
    }

    /// True when `indices` is exactly the contiguous trailing factor block.
    fn is_trailing_block(&self, indices: &[usize]) -> bool {
        let n = self.factors.len();
        let k = indices.len();
        indices.iter().enumerate().all(|(i, &f)| f == n - k + i)
    }

    /// Full composite matrix of a gate on the named factors.
    pub fn embed(&self, gate: &COperator, labels: &[&str]) -> Result<COperator, ApparatusError> {
        let mut out = hilbert::identity(self.dim);
        self.apply_to_columns(gate, labels, &mut out)?;
        Ok(out)
    }

    /// Product state from per-factor states, in factor order.
    pub fn product_state(&self, parts: &[FactorState]) -> Result<CVector, ApparatusError> {
        if parts.len() != self.factors.len() {
            return Err(ApparatusError::StateDimMismatch {
                expected: self.factors.len(),
                actual: parts.len(),
            });
        }
        let mut state = CVector::from_element(1, C64::new(1.0, 0.0));
        for (f, part) in self.factors.iter().zip(parts) {
            let v = match part {
                FactorState::Basis(k) => hilbert::basis_vector(f.dim, *k),
                FactorState::Vector(v) => {
                    if v.len() != f.dim {
                        return Err(ApparatusError::StateDimMismatch {
                            expected: f.dim,
                            actual: v.len(),
                        });
                    }
                    v.clone()
                }
            };
            state = hilbert::tensor_product_vec(&state, &v).map_err(|_| {
                ApparatusError::CapacityExceeded {
                    dim: self.dim,
                    cap: hilbert::dim_cap(),
                }
            })?;
        }
        Ok(state)
    }

    /// Amplitudes over the `keep` factors with all other factors fixed to
    /// the given basis digits.
    pub fn component_with_fixed(
        &self,
        state: &CVector,
        fixed: &[(&str, usize)],
        keep: &[&str],
    ) -> Result<CVector, ApparatusError> {
        if state.len() != self.dim {
            return Err(ApparatusError::StateDimMismatch {
                expected: self.dim,
                actual: state.len(),
            });
        }
        let fixed_idx: Vec<(usize, usize)> = fixed
            .iter()
            .map(|(label, digit)| Ok((self.factor_index(label)?, *digit)))
            .collect::<Result<_, ApparatusError>>()?;
        let keep_idx = self.resolve(keep)?;
        for (i, f) in self.factors.iter().enumerate() {
            let covered =
                keep_idx.contains(&i) || fixed_idx.iter().any(|&(j, _)| j == i);
            if !covered {
                return Err(ApparatusError::UnresolvedFactor {
                    label: f.label.clone(),
                });
            }
        }
        let keep_dim = self.subset_dim(&keep_idx);
        let mut out = CVector::zeros(keep_dim);
        for t in 0..keep_dim {
            let mut rem = t;
            let mut idx = 0usize;
            for &f in keep_idx.iter().rev() {
                let d = self.factors[f].dim;
                idx += (rem % d) * self.strides[f];
                rem /= d;
            }
            for &(f, digit) in &fixed_idx {
                idx += digit * self.strides[f];
            }
            out[t] = state[idx];
        }
        Ok(out)
    }
}

/// Per-factor piece of a product state.
#[derive(Clone, Debug)]
pub enum FactorState {
    Basis(usize),
    Vector(CVector),
}

/// One probe-system coupling: which probe tags which target factors, split
/// by which orthogonal partition, and when.
#[derive(Clone, Debug)]
pub struct CouplingSpec {
    pub probe: String,
    pub targets: Vec<String>,
    pub partition: Observable,
    pub time: f64,
}

impl CouplingSpec {
    pub fn new(
        probe: impl Into<String>,
        targets: Vec<String>,
        partition: Observable,
        time: f64,
    ) -> Self {
        Self {
            probe: probe.into(),
            targets,
            partition,
            time,
        }
    }

    fn validate(&self, space: &CompositeSpace) -> Result<(usize, Vec<usize>), ApparatusError> {
        let probe_idx = space.factor_index(&self.probe)?;
        let target_labels: Vec<&str> = self.targets.iter().map(|s| s.as_str()).collect();
        let target_idx = space.resolve(&target_labels)?;
        if target_idx.contains(&probe_idx) {
            return Err(ApparatusError::RepeatedFactor {
                label: self.probe.clone(),
            });
        }
        let target_dim = space.subset_dim(&target_idx);
        if self.partition.dim() != target_dim {
            return Err(ApparatusError::PartitionDimMismatch {
                expected: target_dim,
                actual: self.partition.dim(),
            });
        }
        let classes = self.partition.num_classes();
        let probe_dim = space.factor_dim(probe_idx);
        if probe_dim < classes + 1 {
            return Err(ApparatusError::ProbeTooSmall {
                label: self.probe.clone(),
                dim: probe_dim,
                classes,
            });
        }
        // Orthogonality is structural; completeness can only drift with the
        // partition basis, so re-check it at the tighter coupling tolerance.
        let mut sum = COperator::zeros(target_dim, target_dim);
        for m in 0..classes {
            sum += self.partition.projector(m).expect("class in range");
        }
        let deviation = hilbert::max_abs_diff(&sum, &hilbert::identity(target_dim));
        if deviation > 1e-12 {
            return Err(ApparatusError::IncompletePartition { deviation });
        }
        Ok((probe_idx, target_idx))
    }

    /// Gate on `[probe, targets…]`, pointer index big-endian first.
    pub(crate) fn gate(&self, space: &CompositeSpace) -> Result<COperator, ApparatusError> {
        let (probe_idx, target_idx) = self.validate(space)?;
        let probe_dim = space.factor_dim(probe_idx);
        let target_dim = space.subset_dim(&target_idx);
        let classes = self.partition.num_classes();
        let mut gate = COperator::zeros(probe_dim * target_dim, probe_dim * target_dim);
        for m in 0..classes {
            let projector = self.partition.projector(m).expect("class in range");
            for j in 0..probe_dim {
                let j_to = pointer_shift(j, m, classes, probe_dim);
                for (r, c) in (0..target_dim).flat_map(|r| (0..target_dim).map(move |c| (r, c))) {
                    let v = projector[(r, c)];
                    if v != C64::new(0.0, 0.0) {
                        gate[(j_to * target_dim + r, j * target_dim + c)] += v;
                    }
                }
            }
        }
        Ok(gate)
    }

    pub(crate) fn factor_labels(&self) -> Vec<&str> {
        std::iter::once(self.probe.as_str())
            .chain(self.targets.iter().map(|s| s.as_str()))
            .collect()
    }
}

/// Composite-space observable that classes each basis state by the digit of
/// one factor: `digit_classes[digit]` names the class of that factor value.
pub fn factor_class_observable(
    space: &CompositeSpace,
    factor: &str,
    classes: Vec<crate::chain::EigenvalueClass>,
    digit_classes: Vec<usize>,
) -> Result<Observable, ApparatusError> {
    let f = space.factor_index(factor)?;
    if digit_classes.len() != space.factor_dim(f) {
        return Err(ApparatusError::OperatorDimMismatch {
            expected: space.factor_dim(f),
            actual: digit_classes.len(),
        });
    }
    let assignment: Vec<usize> = (0..space.dim())
        .map(|idx| digit_classes[space.digit(idx, f)])
        .collect();
    Ok(Observable::computational_with_classes(
        space.dim(),
        classes,
        assignment,
    )?)
}

/// Pointer permutation for class `m` (zero-based): a modular shift by `m + 1`
/// within the first `classes + 1` pointer states, identity beyond them.
fn pointer_shift(j: usize, m: usize, classes: usize, probe_dim: usize) -> usize {
    debug_assert!(j < probe_dim);
    if j <= classes {
        (j + m + 1) % (classes + 1)
    } else {
        j
    }
}

/// Full-space coupling unitary: `|d_0⟩ ⊗ |s⟩ → Σ_m |d_{m+1}⟩ ⊗ π_m|s⟩`,
/// completed by the modular pointer shift.
pub fn coupling_unitary(
    space: &CompositeSpace,
    spec: &CouplingSpec,
) -> Result<COperator, ApparatusError> {
    let gate = spec.gate(space)?;
    space.embed(&gate, &spec.factor_labels())
}

/// Exact inverse of [`coupling_unitary`]: composing the two is the identity.
pub fn reverse_coupling_unitary(
    space: &CompositeSpace,
    spec: &CouplingSpec,
) -> Result<COperator, ApparatusError> {
    let gate = spec.gate(space)?.adjoint();
    space.embed(&gate, &spec.factor_labels())
}

pub(crate) fn register_gate(
    space: &CompositeSpace,
    memory: &str,
    probe: &str,
) -> Result<(COperator, usize, usize), ApparatusError> {
    let memory_idx = space.factor_index(memory)?;
    let probe_idx = space.factor_index(probe)?;
    if memory_idx == probe_idx {
        return Err(ApparatusError::RepeatedFactor {
            label: memory.to_string(),
        });
    }
    let k = space.factor_dim(memory_idx);
    let p = space.factor_dim(probe_idx);
    if k < p {
        return Err(ApparatusError::MemoryTooSmall {
            memory: memory.to_string(),
            memory_dim: k,
            probe: probe.to_string(),
            probe_dim: p,
        });
    }
    // Gate on [memory, probe]: |mu_i⟩|d_j⟩ → |mu_{(i+j) mod K}⟩|d_j⟩.
    let mut gate = COperator::zeros(k * p, k * p);
    for i in 0..k {
        for j in 0..p {
            gate[(((i + j) % k) * p + j, i * p + j)] = C64::new(1.0, 0.0);
        }
    }
    Ok((gate, memory_idx, probe_idx))
}

/// Full-space registration unitary copying the probe index into the memory:
/// `|mu_0⟩|d_j⟩ → |mu_j⟩|d_j⟩`, completed by a modular shift of the memory.
pub fn register_memory_unitary(
    space: &CompositeSpace,
    memory: &str,
    probe: &str,
) -> Result<COperator, ApparatusError> {
    let (gate, _, _) = register_gate(space, memory, probe)?;
    space.embed(&gate, &[memory, probe])
}

/// One step of an unregistered-probe protocol.
#[derive(Clone, Debug)]
pub enum TagEventKind {
    /// Evolution on the named factors.
    Unitary { factors: Vec<String>, op: COperator },
    /// Probe coupling per the event's [`CouplingSpec`].
    Couple(CouplingSpec),
}

#[derive(Clone, Debug)]
pub struct TagEvent {
    pub time: f64,
    pub kind: TagEventKind,
}

impl TagEvent {
    pub fn unitary(time: f64, factors: Vec<String>, op: COperator) -> Self {
        Self {
            time,
            kind: TagEventKind::Unitary { factors, op },
        }
    }

    pub fn couple(spec: CouplingSpec) -> Self {
        Self {
            time: spec.time,
            kind: TagEventKind::Couple(spec),
        }
    }
}

/// Evolve an initial composite state through time-ordered couplings and
/// unitaries; each coupling tags one more probe factor, decomposing the free
/// system state into probe-labeled substates.
pub fn tagged_final_state(
    space: &CompositeSpace,
    initial: &CVector,
    events: &[TagEvent],
) -> Result<CVector, ApparatusError> {
    if initial.len() != space.dim() {
        return Err(ApparatusError::StateDimMismatch {
            expected: space.dim(),
            actual: initial.len(),
        });
    }
    for (position, pair) in events.windows(2).enumerate() {
        if pair[1].time < pair[0].time {
            return Err(ApparatusError::UnorderedEvents {
                position: position + 1,
            });
        }
    }
    let mut state = initial.clone();
    for event in events {
        match &event.kind {
            TagEventKind::Unitary { factors, op } => {
                let labels: Vec<&str> = factors.iter().map(|s| s.as_str()).collect();
                space.apply_to_vector(op, &labels, &mut state)?;
            }
            TagEventKind::Couple(spec) => {
                let gate = spec.gate(space)?;
                space.apply_to_vector(&gate, &spec.factor_labels(), &mut state)?;
            }
        }
    }
    Ok(state)
}

/// Outcome distribution of a final observable on the named factors, read
/// from a tagged state: each class probability is the squared norm of the
/// projected state, i.e. the trace over all probe factors.
pub fn perceive_distribution(
    space: &CompositeSpace,
    state: &CVector,
    observable: &Observable,
    labels: &[&str],
) -> Result<Distribution, ApparatusError> {
    if state.len() != space.dim() {
        return Err(ApparatusError::StateDimMismatch {
            expected: space.dim(),
            actual: state.len(),
        });
    }
    let indices = space.resolve(labels)?;
    let subset = space.subset_dim(&indices);
    if observable.dim() != subset {
        return Err(ApparatusError::OperatorDimMismatch {
            expected: subset,
            actual: observable.dim(),
        });
    }
    let mut raw = BTreeMap::new();
    for m in 0..observable.num_classes() {
        let projector = observable.projector(m).expect("class in range");
        let mut projected = state.clone();
        space.apply_to_vector(&projector, labels, &mut projected)?;
        raw.insert(OutcomeSequence::new(vec![m]), projected.norm_squared());
    }
    Ok(Distribution::from_raw(raw).expect("squared norms are non-negative"))
}

/// Multiply `gate` into `data` viewed as a `g x cols` column-major matrix.
fn apply_gate_gemm(gate: &COperator, data: &mut [C64], g: usize, cols: usize) {
    debug_assert_eq!(data.len(), g * cols);
    if g * g * cols < 4096 {
        let mut scratch = vec![C64::new(0.0, 0.0); g];
        for c in 0..cols {
            let col = &mut data[c * g..(c + 1) * g];
            scratch.copy_from_slice(col);
            for r in 0..g {
                let mut acc = C64::new(0.0, 0.0);
                for t in 0..g {
                    acc += gate[(r, t)] * scratch[t];
                }
                col[r] = acc;
            }
        }
        return;
    }
    let mut out = vec![C64::new(0.0, 0.0); data.len()];
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            g,
            g,
            cols,
            [1.0, 0.0],
            gate.as_ptr() as *const [f64; 2],
            1,
            g as isize,
            data.as_ptr() as *const [f64; 2],
            1,
            g as isize,
            [0.0, 0.0],
            out.as_mut_ptr() as *mut [f64; 2],
            1,
            g as isize,
        );
    }
    data.copy_from_slice(&out);
}

/// Gather/apply/scatter for factor subsets that are not a trailing block.
fn apply_gate_strided(
    gate: &COperator,
    gate_offsets: &[usize],
    rest_offsets: &[usize],
    data: &mut [C64],
) {
    let g = gate_offsets.len();
    let mut scratch = vec![C64::new(0.0, 0.0); g];
    let mut result = vec![C64::new(0.0, 0.0); g];
    for &base in rest_offsets {
        for (t, &off) in gate_offsets.iter().enumerate() {
            scratch[t] = data[base + off];
        }
        for r in 0..g {
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..g {
                acc += gate[(r, t)] * scratch[t];
            }
            result[r] = acc;
        }
        for (t, &off) in gate_offsets.iter().enumerate() {
            data[base + off] = result[t];
        }
    }
}
