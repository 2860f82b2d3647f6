//! Outcome sequences and probability distributions over them.

use std::collections::BTreeMap;

use thiserror::Error;

/// Tuple of eigenvalue-class indices, one per measurement time (slot 0 is the
/// preparation).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OutcomeSequence(pub Vec<usize>);

impl OutcomeSequence {
    pub fn new(indices: Vec<usize>) -> Self {
        Self(indices)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<usize> {
        self.0.last().copied()
    }
}

impl std::fmt::Display for OutcomeSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, m) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<usize>> for OutcomeSequence {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DistributionError {
    #[error("probability {value:.3e} for outcome {outcome} below the -1e-12 floor")]
    NegativeProbability { outcome: OutcomeSequence, value: f64 },

    #[error("probability {value:.3e} for outcome {outcome} is not finite")]
    NonFiniteProbability { outcome: OutcomeSequence, value: f64 },
}

/// Probabilities keyed by outcome sequence, iterated in index order.
///
/// Raw values may carry rounding noise as low as -1e-12; anything below that
/// is rejected, anything negative above it is clamped to zero on entry.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Distribution {
    entries: BTreeMap<OutcomeSequence, f64>,
}

impl Distribution {
    pub fn from_raw(raw: BTreeMap<OutcomeSequence, f64>) -> Result<Self, DistributionError> {
        let mut entries = BTreeMap::new();
        for (outcome, value) in raw {
            if !value.is_finite() {
                return Err(DistributionError::NonFiniteProbability { outcome, value });
            }
            if value < -1e-12 {
                return Err(DistributionError::NegativeProbability { outcome, value });
            }
            entries.insert(outcome, value.max(0.0));
        }
        Ok(Self { entries })
    }

    /// Probability of `outcome`; absent outcomes have probability zero.
    pub fn probability(&self, outcome: &OutcomeSequence) -> f64 {
        self.entries.get(outcome).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OutcomeSequence, f64)> {
        self.entries.iter().map(|(k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_probability(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Largest per-outcome difference, taken over the union of both key sets.
    pub fn max_abs_diff(&self, other: &Distribution) -> f64 {
        let mut worst = 0.0f64;
        for (k, v) in self.iter() {
            worst = worst.max((v - other.probability(k)).abs());
        }
        for (k, v) in other.iter() {
            worst = worst.max((v - self.probability(k)).abs());
        }
        worst
    }

    /// Marginal over everything but the final outcome slot.
    pub fn last_component_marginal(&self) -> Distribution {
        let mut acc: BTreeMap<OutcomeSequence, f64> = BTreeMap::new();
        for (k, v) in self.iter() {
            if let Some(last) = k.last() {
                *acc.entry(OutcomeSequence::new(vec![last])).or_insert(0.0) += v;
            }
        }
        Distribution { entries: acc }
    }

    /// Same probabilities with the leading (preparation) slot removed.
    pub fn without_first_component(&self) -> Distribution {
        let mut acc: BTreeMap<OutcomeSequence, f64> = BTreeMap::new();
        for (k, v) in self.iter() {
            let tail: Vec<usize> = k.0.iter().skip(1).copied().collect();
            *acc.entry(OutcomeSequence::new(tail)).or_insert(0.0) += v;
        }
        Distribution { entries: acc }
    }
}
