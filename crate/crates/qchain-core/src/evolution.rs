//! Conditional-evolution probability engine for measurement chains.
//!
//! A partial evolution operator interleaves the interval unitaries with the
//! projectors of the intermediate outcomes. Conjugating the initial density
//! operator with it yields a conditional (unnormalized) state, and the trace
//! against the final projector reproduces the path-sum probabilities of
//! [`crate::feynman`]. The partial evolution is not unitary whenever an
//! intermediate projector is nontrivial, which is what the cross-engine
//! equivalence tests pin down.

use std::collections::BTreeMap;

use nalgebra::SymmetricEigen;
use thiserror::Error;

use crate::chain::MeasurementChain;
use crate::dist::{Distribution, OutcomeSequence};
use crate::hilbert::{self, COperator, C64};

/// Tolerance for density-operator structure checks.
pub const DENSITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvolutionError {
    #[error("expected {expected} intermediate classes, got {actual}")]
    IntermediateLength { expected: usize, actual: usize },

    #[error("class {class} at step {step} out of range ({count} classes)")]
    ClassOutOfRange {
        step: usize,
        class: usize,
        count: usize,
    },

    #[error("outcome sequence has {actual} entries, chain has {expected} times")]
    OutcomeLength { expected: usize, actual: usize },

    #[error("density operator has dimension {actual}, chain has {expected}")]
    DensityDimMismatch { expected: usize, actual: usize },

    #[error("density operator is not Hermitian (max |rho - rho[dagger]| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("density operator trace deviates from 1 by {deviation:.3e}")]
    BadTrace { deviation: f64 },

    #[error("density operator has eigenvalue {eigenvalue:.3e} below the positivity floor")]
    NotPositive { eigenvalue: f64 },
}

/// `U(t_L, t_{L-1}) Π_{m_{L-1}} U(t_{L-1}, t_{L-2}) … Π_{m_1} U(t_1, t_0)`
/// for the intermediate classes `m_1 … m_{L-1}`.
pub fn partial_evolution(
    chain: &MeasurementChain,
    intermediates: &[usize],
) -> Result<COperator, EvolutionError> {
    check_intermediates(chain, intermediates)?;
    let steps = chain.steps();
    let mut op = chain.unitary(1).clone();
    for (i, &m) in intermediates.iter().enumerate() {
        let l = i + 1;
        let projector = chain
            .observable(l)
            .projector(m)
            .expect("class index checked above");
        op = hilbert::matmul(&projector, &op);
        op = hilbert::matmul(chain.unitary(l + 1), &op);
    }
    debug_assert_eq!(intermediates.len(), steps.saturating_sub(1));
    Ok(op)
}

/// Conditional state `U_partial ρ₀ U_partial†` for an explicit, validated
/// density operator.
pub fn conditional_state(
    chain: &MeasurementChain,
    intermediates: &[usize],
    rho0: &COperator,
) -> Result<COperator, EvolutionError> {
    validate_density(rho0, chain.dim())?;
    Ok(conditional_state_unchecked(chain, intermediates, rho0)?)
}

fn conditional_state_unchecked(
    chain: &MeasurementChain,
    intermediates: &[usize],
    rho0: &COperator,
) -> Result<COperator, EvolutionError> {
    let u = partial_evolution(chain, intermediates)?;
    let left = hilbert::matmul(&u, rho0);
    Ok(hilbert::matmul(&left, &u.adjoint()))
}

/// Probability of a full outcome sequence `(m_0, m_1, …, m_L)` via the trace
/// rule; agrees with the path-sum engine entry for entry.
pub fn trace_probability(
    chain: &MeasurementChain,
    outcomes: &OutcomeSequence,
) -> Result<f64, EvolutionError> {
    let steps = chain.steps();
    if outcomes.len() != steps + 1 {
        return Err(EvolutionError::OutcomeLength {
            expected: steps + 1,
            actual: outcomes.len(),
        });
    }
    for (l, &m) in outcomes.0.iter().enumerate() {
        let count = chain.observable(l).num_classes();
        if m >= count {
            return Err(EvolutionError::ClassOutOfRange {
                step: l,
                class: m,
                count,
            });
        }
    }
    if outcomes.0[0] != chain.preparation_class() {
        // The preparation fixes the time-zero outcome; other classes never occur.
        return Ok(0.0);
    }
    if steps == 0 {
        return Ok(1.0);
    }
    let intermediates = &outcomes.0[1..steps];
    let rho = conditional_state_unchecked(chain, intermediates, &chain.initial().density())?;
    Ok(projected_trace(chain, steps, outcomes.0[steps], &rho))
}

/// Full distribution by the trace rule, over the same outcome keys as
/// [`crate::feynman::chain_distribution`].
pub fn chain_distribution(chain: &MeasurementChain) -> Result<Distribution, EvolutionError> {
    let steps = chain.steps();
    let prep = chain.preparation_class();
    let mut acc: BTreeMap<OutcomeSequence, f64> = BTreeMap::new();
    if steps == 0 {
        acc.insert(OutcomeSequence::new(vec![prep]), 1.0);
        return Ok(Distribution::from_raw(acc).expect("unit mass"));
    }
    let rho0 = chain.initial().density();
    let mut intermediates = vec![0usize; steps - 1];
    loop {
        let rho = conditional_state_unchecked(chain, &intermediates, &rho0)?;
        let final_obs = chain.observable(steps);
        for m in 0..final_obs.num_classes() {
            let p = projected_trace(chain, steps, m, &rho);
            let mut key = Vec::with_capacity(steps + 1);
            key.push(prep);
            key.extend_from_slice(&intermediates);
            key.push(m);
            acc.insert(OutcomeSequence::new(key), p);
        }
        // Advance the mixed-radix intermediate counter.
        let mut carry = true;
        for (i, m) in intermediates.iter_mut().enumerate() {
            if !carry {
                break;
            }
            *m += 1;
            if *m < chain.observable(i + 1).num_classes() {
                carry = false;
            } else {
                *m = 0;
            }
        }
        if carry {
            break;
        }
    }
    Ok(Distribution::from_raw(acc).expect("trace probabilities stay above the floor"))
}

/// tr[Π^L_m ρ] evaluated in the final observable's eigenbasis.
fn projected_trace(chain: &MeasurementChain, step: usize, m: usize, rho: &COperator) -> f64 {
    let obs = chain.observable(step);
    if obs.is_computational() {
        obs.members(m).iter().map(|&n| rho[(n, n)].re).sum()
    } else {
        obs.members(m)
            .iter()
            .map(|&n| {
                let col = obs.basis().column(n);
                (col.adjoint() * rho * col)[(0, 0)].re
            })
            .sum()
    }
}

/// Reject operators that are not Hermitian, unit-trace, positive
/// semidefinite density operators of the expected dimension.
pub fn validate_density(rho: &COperator, dim: usize) -> Result<(), EvolutionError> {
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(EvolutionError::DensityDimMismatch {
            expected: dim,
            actual: rho.nrows(),
        });
    }
    let hermiticity = hilbert::max_abs_diff(rho, &rho.adjoint());
    if hermiticity > DENSITY_TOL {
        return Err(EvolutionError::NotHermitian {
            deviation: hermiticity,
        });
    }
    let trace: C64 = (0..dim).map(|i| rho[(i, i)]).sum();
    let trace_dev = (trace - C64::new(1.0, 0.0)).norm();
    if trace_dev > DENSITY_TOL {
        return Err(EvolutionError::BadTrace {
            deviation: trace_dev,
        });
    }
    let eigen = SymmetricEigen::new(rho.clone());
    let min = eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -DENSITY_TOL {
        return Err(EvolutionError::NotPositive { eigenvalue: min });
    }
    Ok(())
}

fn check_intermediates(
    chain: &MeasurementChain,
    intermediates: &[usize],
) -> Result<(), EvolutionError> {
    let expected = chain.steps().saturating_sub(1);
    if intermediates.len() != expected {
        return Err(EvolutionError::IntermediateLength {
            expected,
            actual: intermediates.len(),
        });
    }
    for (i, &m) in intermediates.iter().enumerate() {
        let count = chain.observable(i + 1).num_classes();
        if m >= count {
            return Err(EvolutionError::ClassOutOfRange {
                step: i + 1,
                class: m,
                count,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ChainBuilder, EigenvalueClass, InitialState, Observable};
    use crate::feynman;
    use crate::hilbert::{
        basis_vector, hadamard, haar_random_unitary, identity, max_abs_diff, outer_product,
    };

    fn three_step_chain(seed: u64) -> MeasurementChain {
        let degenerate = Observable::computational_with_classes(
            3,
            vec![
                EigenvalueClass::new("lo", 0.0),
                EigenvalueClass::new("hi", 1.0),
            ],
            vec![0, 0, 1],
        )
        .unwrap();
        ChainBuilder::new(3)
            .prepare(
                0.0,
                Observable::computational(3),
                InitialState::pure(basis_vector(3, 0)).unwrap(),
            )
            .step(1.0, haar_random_unitary(3, seed), degenerate)
            .step(2.0, haar_random_unitary(3, seed + 1), Observable::computational(3))
            .step(3.0, haar_random_unitary(3, seed + 2), Observable::computational(3))
            .build()
            .unwrap()
    }

    #[test]
    fn trivial_classes_reduce_to_total_evolution() {
        let u1 = haar_random_unitary(2, 1);
        let u2 = haar_random_unitary(2, 2);
        let chain = ChainBuilder::new(2)
            .prepare(
                0.0,
                Observable::computational(2),
                InitialState::pure(basis_vector(2, 0)).unwrap(),
            )
            .step(1.0, u1.clone(), Observable::trivial(2, "any"))
            .step(2.0, u2.clone(), Observable::computational(2))
            .build()
            .unwrap();
        let partial = partial_evolution(&chain, &[0]).unwrap();
        let total = hilbert::matmul(&u2, &u1);
        assert!(max_abs_diff(&partial, &total) < 1e-13);
    }

    #[test]
    fn mismatched_class_annihilates_the_prepared_state() {
        let chain = ChainBuilder::new(2)
            .prepare(
                0.0,
                Observable::computational(2),
                InitialState::pure(basis_vector(2, 0)).unwrap(),
            )
            .step(1.0, identity(2), Observable::computational(2))
            .step(2.0, identity(2), Observable::computational(2))
            .build()
            .unwrap();
        let partial = partial_evolution(&chain, &[1]).unwrap();
        let moved = partial * basis_vector(2, 0);
        assert!(moved.norm() < 1e-15);
    }

    #[test]
    fn partial_evolutions_sum_to_the_full_unitary() {
        let chain = three_step_chain(40);
        let mut total = COperator::zeros(3, 3);
        for m1 in 0..2 {
            for m2 in 0..3 {
                total += partial_evolution(&chain, &[m1, m2]).unwrap();
            }
        }
        let direct = hilbert::matmul(
            chain.unitary(3),
            &hilbert::matmul(chain.unitary(2), chain.unitary(1)),
        );
        assert!(max_abs_diff(&total, &direct) < 1e-12);
    }

    #[test]
    fn unitary_conjugation_preserves_trace_for_trivial_classes() {
        let chain = ChainBuilder::new(2)
            .prepare(
                0.0,
                Observable::computational(2),
                InitialState::pure(basis_vector(2, 0)).unwrap(),
            )
            .step(1.0, hadamard(), Observable::trivial(2, "any"))
            .step(2.0, hadamard(), Observable::computational(2))
            .build()
            .unwrap();
        let rho0 = chain.initial().density();
        let rho = conditional_state(&chain, &[0], &rho0).unwrap();
        let trace: C64 = (0..2).map(|i| rho[(i, i)]).sum();
        assert!((trace.re - 1.0).abs() < 1e-13);
        assert!(trace.im.abs() < 1e-15);
    }

    #[test]
    fn pure_initial_state_stays_rank_one() {
        let chain = three_step_chain(50);
        let rho0 = chain.initial().density();
        let rho = conditional_state(&chain, &[0, 1], &rho0).unwrap();
        // For rank one, tr(rho^2) = (tr rho)^2.
        let sq = hilbert::matmul(&rho, &rho);
        let tr: f64 = (0..3).map(|i| rho[(i, i)].re).sum();
        let tr_sq: f64 = (0..3).map(|i| sq[(i, i)].re).sum();
        assert!((tr_sq - tr * tr).abs() < 1e-12);
    }

    #[test]
    fn partial_evolution_is_not_unitary_with_nontrivial_projector() {
        let chain = three_step_chain(60);
        let u = partial_evolution(&chain, &[0, 0]).unwrap();
        let gram = hilbert::matmul(&u.adjoint(), &u);
        assert!(max_abs_diff(&gram, &identity(3)) > 1e-3);
    }

    #[test]
    fn gram_of_partial_evolution_matches_heisenberg_projector_product() {
        // U_partial[dagger] U_partial equals the time-ordered product of the
        // intermediate projectors taken in the Heisenberg picture.
        let chain = three_step_chain(70);
        let (m1, m2) = (0usize, 1usize);
        let u = partial_evolution(&chain, &[m1, m2]).unwrap();
        let gram = hilbert::matmul(&u.adjoint(), &u);

        let w1 = chain.unitary(1).clone();
        let w2 = hilbert::matmul(chain.unitary(2), &w1);
        let heis = |w: &COperator, p: &COperator| {
            hilbert::matmul(&w.adjoint(), &hilbert::matmul(p, w))
        };
        let h1 = heis(&w1, &chain.observable(1).projector(m1).unwrap());
        let h2 = heis(&w2, &chain.observable(2).projector(m2).unwrap());
        let product = hilbert::matmul(&h1, &hilbert::matmul(&h2, &h1));
        assert!(max_abs_diff(&gram, &product) < 1e-12);
    }

    #[test]
    fn malformed_densities_are_rejected() {
        let chain = three_step_chain(80);
        let mut not_hermitian = identity(3).unscale(3.0);
        not_hermitian[(0, 1)] = C64::new(0.3, 0.1);
        assert!(matches!(
            conditional_state(&chain, &[0, 0], &not_hermitian),
            Err(EvolutionError::NotHermitian { .. })
        ));

        let bad_trace = identity(3);
        assert!(matches!(
            conditional_state(&chain, &[0, 0], &bad_trace),
            Err(EvolutionError::BadTrace { .. })
        ));

        let v0 = basis_vector(3, 0);
        let v1 = basis_vector(3, 1);
        let negative = outer_product(&v0, &v0).scale(1.5) - outer_product(&v1, &v1).scale(0.5);
        assert!(matches!(
            conditional_state(&chain, &[0, 0], &negative),
            Err(EvolutionError::NotPositive { .. })
        ));
    }

    #[test]
    fn identity_chain_trace_probabilities_are_deterministic() {
        let chain = ChainBuilder::new(2)
            .prepare(
                0.0,
                Observable::computational(2),
                InitialState::pure(basis_vector(2, 0)).unwrap(),
            )
            .step(1.0, identity(2), Observable::computational(2))
            .step(2.0, identity(2), Observable::computational(2))
            .build()
            .unwrap();
        for m1 in 0..2 {
            for m2 in 0..2 {
                let p = trace_probability(&chain, &OutcomeSequence::new(vec![0, m1, m2])).unwrap();
                let expected = if m1 == 0 && m2 == 0 { 1.0 } else { 0.0 };
                assert!((p - expected).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn trace_route_matches_path_sum_on_degenerate_chains() {
        for seed in 0..8u64 {
            let chain = three_step_chain(100 + seed * 3);
            let path_sum = feynman::chain_distribution(&chain);
            let trace = chain_distribution(&chain).unwrap();
            assert!(
                path_sum.max_abs_diff(&trace) < 1e-12,
                "engines disagree at seed {seed}"
            );
        }
    }

    #[test]
    fn conditional_states_are_hermitian_and_positive() {
        let chain = three_step_chain(200);
        let rho0 = chain.initial().density();
        for m1 in 0..2 {
            for m2 in 0..3 {
                let rho = conditional_state(&chain, &[m1, m2], &rho0).unwrap();
                assert!(hilbert::max_abs_diff(&rho, &rho.adjoint()) < 1e-12);
                let eigen = SymmetricEigen::new(rho.clone());
                let min = eigen
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                assert!(min >= -1e-10);
                let tr: f64 = (0..3).map(|i| rho[(i, i)].re).sum();
                assert!(tr <= 1.0 + 1e-12);
            }
        }
    }
}
