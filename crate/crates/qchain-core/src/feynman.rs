//! Path-sum probability engine for measurement chains.
//!
//! A virtual path assigns one basis vector per measurement time and carries
//! the product of the interval matrix elements as its amplitude. Summing the
//! amplitudes over the degeneracies of every intermediate eigenvalue gives
//! the amplitude of a "real" path; its squared modulus, summed over the
//! degeneracy of the final eigenvalue, is the probability of the outcome
//! sequence. The whole sum refers to the entire experiment at once —
//! probabilities do not factorize over steps unless every observable is
//! non-degenerate.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::chain::MeasurementChain;
use crate::dist::{Distribution, OutcomeSequence};
use crate::hilbert::{self, COperator, CVector, C64};

/// Basis-index tuple, one entry per time `t_0 … t_L`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VirtualPath(pub Vec<usize>);

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FeynmanError {
    #[error("path has {actual} indices, chain has {expected} times")]
    PathLength { expected: usize, actual: usize },

    #[error("index {index} at position {position} out of range for dimension {dim}")]
    IndexOutOfRange {
        position: usize,
        index: usize,
        dim: usize,
    },

    #[error("expected {expected} intermediate classes, got {actual}")]
    IntermediateLength { expected: usize, actual: usize },

    #[error("class {class} at step {step} out of range ({count} classes)")]
    ClassOutOfRange {
        step: usize,
        class: usize,
        count: usize,
    },

    #[error("real amplitudes are defined for pure preparations only")]
    MixedInitialState,
}

/// Tuning knobs for the enumeration.
#[derive(Clone, Debug, Default)]
pub struct EngineOptions {
    /// Skip outcome branches whose partial amplitude norm falls below this.
    /// Off by default: exactness first.
    pub prune_threshold: Option<f64>,
}

/// Amplitude of a single virtual path: the product of interval matrix
/// elements `⟨q^l_{n_l}|U_l|q^{l-1}_{n_{l-1}}⟩`.
pub fn virtual_amplitude(
    chain: &MeasurementChain,
    path: &VirtualPath,
) -> Result<C64, FeynmanError> {
    let steps = chain.steps();
    if path.0.len() != steps + 1 {
        return Err(FeynmanError::PathLength {
            expected: steps + 1,
            actual: path.0.len(),
        });
    }
    for (position, &index) in path.0.iter().enumerate() {
        if index >= chain.dim() {
            return Err(FeynmanError::IndexOutOfRange {
                position,
                index,
                dim: chain.dim(),
            });
        }
    }
    let mut amp = C64::new(1.0, 0.0);
    for l in 1..=steps {
        let bra = chain.observable(l).basis().column(path.0[l]);
        let ket = chain.observable(l - 1).basis().column(path.0[l - 1]);
        let prop = chain.unitary(l) * ket;
        amp *= bra.dotc(&prop);
    }
    Ok(amp)
}

/// Amplitude of a real path: virtual amplitudes summed over the degeneracies
/// of every intermediate eigenvalue, ending on the final *basis* index
/// `final_index`. The initial slot is fixed by the pure preparation.
pub fn real_amplitude(
    chain: &MeasurementChain,
    intermediates: &[usize],
    final_index: usize,
) -> Result<C64, FeynmanError> {
    if !chain.initial().is_pure() {
        return Err(FeynmanError::MixedInitialState);
    }
    let steps = chain.steps();
    if steps == 0 {
        return Err(FeynmanError::IntermediateLength {
            expected: 0,
            actual: intermediates.len(),
        });
    }
    if intermediates.len() != steps - 1 {
        return Err(FeynmanError::IntermediateLength {
            expected: steps - 1,
            actual: intermediates.len(),
        });
    }
    for (i, &m) in intermediates.iter().enumerate() {
        let count = chain.observable(i + 1).num_classes();
        if m >= count {
            return Err(FeynmanError::ClassOutOfRange {
                step: i + 1,
                class: m,
                count,
            });
        }
    }
    if final_index >= chain.dim() {
        return Err(FeynmanError::IndexOutOfRange {
            position: steps,
            index: final_index,
            dim: chain.dim(),
        });
    }
    let prop = Propagator::new(chain);
    let psi = match chain.initial() {
        crate::chain::InitialState::Pure(psi) => psi,
        crate::chain::InitialState::Mixed(_) => unreachable!(),
    };
    let mut wave = prop.first_step(psi);
    for (i, &m) in intermediates.iter().enumerate() {
        wave = prop.masked_step(i + 2, &wave, m);
    }
    Ok(wave[final_index])
}

/// Probability of every outcome sequence of the chain, per the path-sum rule;
/// mixtures enter as convex combinations of their pure components.
pub fn chain_distribution(chain: &MeasurementChain) -> Distribution {
    chain_distribution_with(chain, &EngineOptions::default())
}

pub fn chain_distribution_with(chain: &MeasurementChain, options: &EngineOptions) -> Distribution {
    let steps = chain.steps();
    let prep = chain.preparation_class();
    let mut acc: BTreeMap<OutcomeSequence, f64> = BTreeMap::new();

    if steps == 0 {
        acc.insert(OutcomeSequence::new(vec![prep]), 1.0);
        return Distribution::from_raw(acc).expect("unit mass is a valid distribution");
    }

    let prop = Propagator::new(chain);
    for (weight, psi) in chain.initial().components() {
        let wave = prop.first_step(psi);
        let mut prefix = Vec::with_capacity(steps + 1);
        prefix.push(prep);
        accumulate(
            chain, &prop, options, 1, &wave, &mut prefix, weight, &mut acc,
        );
    }
    Distribution::from_raw(acc).expect("path-sum probabilities are non-negative")
}

fn accumulate(
    chain: &MeasurementChain,
    prop: &Propagator<'_>,
    options: &EngineOptions,
    level: usize,
    wave: &CVector,
    prefix: &mut Vec<usize>,
    weight: f64,
    acc: &mut BTreeMap<OutcomeSequence, f64>,
) {
    let steps = chain.steps();
    if level == steps {
        let final_obs = chain.observable(steps);
        for m in 0..final_obs.num_classes() {
            let p: f64 = final_obs
                .members(m)
                .iter()
                .map(|&n| wave[n].norm_sqr())
                .sum();
            prefix.push(m);
            *acc.entry(OutcomeSequence::new(prefix.clone())).or_insert(0.0) += weight * p;
            prefix.pop();
        }
        return;
    }
    let obs = chain.observable(level);
    for m in 0..obs.num_classes() {
        if let Some(threshold) = options.prune_threshold {
            let mass: f64 = obs.members(m).iter().map(|&n| wave[n].norm_sqr()).sum();
            if mass.sqrt() < threshold {
                continue;
            }
        }
        let next = prop.masked_step(level + 1, wave, m);
        prefix.push(m);
        accumulate(chain, prop, options, level + 1, &next, prefix, weight, acc);
        prefix.pop();
    }
}

/// Interval operators expressed between the eigenbases of consecutive
/// observables, so path amplitudes become entry lookups.
struct Propagator<'a> {
    chain: &'a MeasurementChain,
    /// `B_l† U_l B_{l-1}` for `l = 2..=L`, indexed by `l - 2`; `None` when
    /// both bases are computational and `U_l` can be used directly.
    transformed: Vec<Option<COperator>>,
}

impl<'a> Propagator<'a> {
    fn new(chain: &'a MeasurementChain) -> Self {
        let steps = chain.steps();
        let mut transformed = Vec::with_capacity(steps.saturating_sub(1));
        for l in 2..=steps {
            let before = chain.observable(l - 1);
            let after = chain.observable(l);
            if before.is_computational() && after.is_computational() {
                transformed.push(None);
            } else {
                let mut t = chain.unitary(l).clone();
                if !before.is_computational() {
                    t = hilbert::matmul(&t, before.basis());
                }
                if !after.is_computational() {
                    t = hilbert::matmul(&after.basis().adjoint(), &t);
                }
                transformed.push(Some(t));
            }
        }
        Self { chain, transformed }
    }

    /// `B_1† U_1 |ψ⟩`: amplitudes of the prepared state in the first
    /// measured eigenbasis.
    fn first_step(&self, psi: &CVector) -> CVector {
        let propagated = self.chain.unitary(1) * psi;
        let q1 = self.chain.observable(1);
        if q1.is_computational() {
            propagated
        } else {
            q1.basis().adjoint() * propagated
        }
    }

    fn step_matrix(&self, l: usize) -> &COperator {
        match &self.transformed[l - 2] {
            Some(t) => t,
            None => self.chain.unitary(l),
        }
    }

    /// Propagate amplitudes through interval `l`, keeping only the basis
    /// vectors of class `class` at time `l - 1`.
    fn masked_step(&self, l: usize, wave: &CVector, class: usize) -> CVector {
        let t = self.step_matrix(l);
        let members = self.chain.observable(l - 1).members(class);
        let mut out = CVector::zeros(t.nrows());
        for &n in members {
            let w = wave[n];
            if w == C64::new(0.0, 0.0) {
                continue;
            }
            out.axpy(w, &t.column(n), C64::new(1.0, 0.0));
        }
        out
    }
}
