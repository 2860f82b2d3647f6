//! Deterministic random chains, observables, and states for property tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chain::{
    ChainBuilder, EigenvalueClass, InitialState, MeasurementChain, MixtureComponent, Observable,
};
use crate::hilbert::{self, CVector};

/// Bounds for [`random_chain`].
#[derive(Clone, Debug)]
pub struct RandomChainConfig {
    /// Dimensions are drawn from `2..=max_dim`.
    pub max_dim: usize,
    /// Step counts are drawn from `1..=max_steps`.
    pub max_steps: usize,
    /// Allow degenerate eigenvalue classes on intermediate and final
    /// observables.
    pub allow_degenerate: bool,
    /// Draw a two-component mixed preparation roughly one time in six.
    pub allow_mixed: bool,
}

impl Default for RandomChainConfig {
    fn default() -> Self {
        Self {
            max_dim: 4,
            max_steps: 4,
            allow_degenerate: true,
            allow_mixed: true,
        }
    }
}

/// Observable with a Haar-random eigenbasis and a random surjective class
/// assignment.
pub fn random_observable(dim: usize, allow_degenerate: bool, seed: u64) -> Observable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = hilbert::haar_random_unitary(dim, rng.random());
    let num_classes = if allow_degenerate {
        rng.random_range(1..=dim)
    } else {
        dim
    };
    // Cover every class once, then scatter the rest.
    let mut assignment: Vec<usize> = (0..dim)
        .map(|n| {
            if n < num_classes {
                n
            } else {
                rng.random_range(0..num_classes)
            }
        })
        .collect();
    for i in (1..assignment.len()).rev() {
        let j = rng.random_range(0..=i);
        assignment.swap(i, j);
    }
    let classes = (0..num_classes)
        .map(|m| EigenvalueClass::new(format!("c{m}"), m as f64))
        .collect();
    Observable::new(basis, classes, assignment).expect("generated observable is valid")
}

/// Random normalized state, deterministic in `seed`.
pub fn random_state(dim: usize, seed: u64) -> CVector {
    hilbert::random_state(dim, seed)
}

/// Random valid measurement chain: Haar interval unitaries, random
/// degeneracy partitions, and a pure or mixed preparation.
pub fn random_chain(seed: u64, config: &RandomChainConfig) -> MeasurementChain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let dim = rng.random_range(2..=config.max_dim);
    let steps = rng.random_range(1..=config.max_steps);

    let mixed = config.allow_mixed && rng.random_range(0..6) == 0;
    let (q0, initial) = if mixed {
        let w = rng.random_range(0.2..0.8);
        let initial = InitialState::mixed(vec![
            MixtureComponent {
                weight: w,
                state: random_state(dim, rng.random()),
            },
            MixtureComponent {
                weight: 1.0 - w,
                state: random_state(dim, rng.random()),
            },
        ])
        .expect("two normalized components");
        (Observable::trivial(dim, "prepared"), initial)
    } else {
        let q0 = random_observable(dim, false, rng.random());
        let start = rng.random_range(0..dim);
        let initial = InitialState::pure(q0.basis_column(start)).expect("basis columns are unit");
        (q0, initial)
    };

    let mut builder = ChainBuilder::new(dim).prepare(0.0, q0, initial);
    for l in 1..=steps {
        builder = builder.step(
            l as f64,
            hilbert::haar_random_unitary(dim, rng.random()),
            random_observable(dim, config.allow_degenerate, rng.random()),
        );
    }
    builder.build().expect("generated chain is valid")
}
