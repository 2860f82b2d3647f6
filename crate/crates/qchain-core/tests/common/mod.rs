//! Shared test oracles, kept independent of the engine implementations.

use std::collections::BTreeMap;

use qchain_core::chain::MeasurementChain;
use qchain_core::dist::{Distribution, OutcomeSequence};
use qchain_core::hilbert::CVector;

/// Literal path-sum evaluation: enumerate every virtual path, multiply the
/// interval matrix elements one by one, group by intermediate classes, and
/// square. No propagation shortcuts, so it cross-checks the engines.
pub fn brute_force_distribution(chain: &MeasurementChain) -> Distribution {
    let steps = chain.steps();
    let prep = chain.preparation_class();
    let mut raw: BTreeMap<OutcomeSequence, f64> = BTreeMap::new();
    if steps == 0 {
        raw.insert(OutcomeSequence::new(vec![prep]), 1.0);
        return Distribution::from_raw(raw).unwrap();
    }

    for (weight, psi) in chain.initial().components() {
        let class_counts: Vec<usize> = (1..=steps)
            .map(|l| chain.observable(l).num_classes())
            .collect();
        let mut outcome = vec![0usize; steps];
        loop {
            let mut p = 0.0;
            let final_obs = chain.observable(steps);
            for &n_last in final_obs.members(outcome[steps - 1]) {
                p += path_amplitude_sum(chain, &outcome[..steps - 1], n_last, psi).norm_sqr();
            }
            let mut key = Vec::with_capacity(steps + 1);
            key.push(prep);
            key.extend_from_slice(&outcome);
            *raw.entry(OutcomeSequence::new(key)).or_insert(0.0) += weight * p;

            // Mixed-radix increment over the outcome tuple.
            let mut done = true;
            for (slot, &count) in outcome.iter_mut().zip(&class_counts) {
                *slot += 1;
                if *slot < count {
                    done = false;
                    break;
                }
                *slot = 0;
            }
            if done {
                break;
            }
        }
    }
    Distribution::from_raw(raw).unwrap()
}

/// Amplitude summed over every intermediate basis index compatible with the
/// given intermediate classes, ending on the final basis index `n_last`.
fn path_amplitude_sum(
    chain: &MeasurementChain,
    intermediate_classes: &[usize],
    n_last: usize,
    psi: &CVector,
) -> qchain_core::C64 {
    let steps = chain.steps();
    let mut indices = vec![0usize; intermediate_classes.len()];
    let mut total = qchain_core::C64::new(0.0, 0.0);
    loop {
        // Product of matrix elements for one virtual path.
        let mut amp = qchain_core::C64::new(1.0, 0.0);
        let mut from = psi.clone();
        for (l, &slot) in indices.iter().enumerate() {
            let obs = chain.observable(l + 1);
            let n = obs.members(intermediate_classes[l])[slot];
            let bra = obs.basis_column(n);
            amp *= bra.dotc(&(chain.unitary(l + 1) * &from));
            from = bra;
        }
        let bra = chain.observable(steps).basis_column(n_last);
        amp *= bra.dotc(&(chain.unitary(steps) * &from));
        total += amp;

        let mut done = true;
        for (l, slot) in indices.iter_mut().enumerate() {
            let size = chain
                .observable(l + 1)
                .members(intermediate_classes[l])
                .len();
            *slot += 1;
            if *slot < size {
                done = false;
                break;
            }
            *slot = 0;
        }
        if done || indices.is_empty() {
            break;
        }
    }
    total
}
