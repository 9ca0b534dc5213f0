//! Popularity estimators: empirical request frequencies at the BS and the
//! transfer-learning estimator that pools them with source-domain samples.
//!
//! Both estimators work from [`CountVector`]s so they share a single path.

use serde::{Deserialize, Serialize};

use crate::caching::{FileIndex, PopularityProfile};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simulation::{RequestLog, SourceSamples};

/// Per-file request counts and their total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountVector {
    counts: Vec<u64>,
    total: u64,
}

impl CountVector {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_counts(vec![0; n])
    }

    /// Tallies one-based indices into an `n`-file catalog.
    pub fn tally<I: IntoIterator<Item = FileIndex>>(indices: I, n: usize) -> Result<Self> {
        let mut counts = vec![0u64; n];
        for f in indices {
            let slot = f.slot();
            if slot >= n {
                return Err(Error::Data(format!("file index {f} outside [1, {n}]")));
            }
            counts[slot] += 1;
        }
        Ok(Self::from_counts(counts))
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Relative frequencies. Errors when no samples were counted.
    pub fn frequencies<T: Scalar>(&self) -> Result<PopularityProfile<T>> {
        if self.total == 0 {
            return Err(Error::NoSamples);
        }
        let total = T::from_count(self.total);
        PopularityProfile::new(
            self.counts
                .iter()
                .map(|&c| T::from_count(c) / total)
                .collect(),
        )
    }
}

/// Target-domain counts `Ŝ_i^(tar)` summed over every user's requests.
pub fn target_counts(log: &RequestLog, n: usize) -> Result<CountVector> {
    CountVector::tally(log.files(), n)
}

/// Empirical popularity `p̂_i = Ŝ_i / Σ_u k_u`.
pub fn estimate_popularity<T: Scalar>(log: &RequestLog, n: usize) -> Result<PopularityProfile<T>> {
    target_counts(log, n)?.frequencies()
}

/// Source-domain counts `Ŝ_i^s`.
pub fn source_counts(samples: &SourceSamples, n: usize) -> Result<CountVector> {
    CountVector::tally(samples.indices.iter().copied(), n)
}

/// Pooled estimate `(Ŝ_i^(tar) + Ŝ_i^s) / (n_p + m)`.
pub fn tl_estimate<T: Scalar>(
    target: &CountVector,
    source: &CountVector,
) -> Result<PopularityProfile<T>> {
    if target.len() != source.len() {
        return Err(Error::param(format!(
            "target has {} files, source has {}",
            target.len(),
            source.len()
        )));
    }
    let pooled = target
        .counts
        .iter()
        .zip(&source.counts)
        .map(|(a, b)| a + b)
        .collect();
    CountVector::from_counts(pooled).frequencies()
}

/// Sup-norm distance `max_i |p_i - q_i|`.
pub fn sup_distance<T: Scalar>(p: &PopularityProfile<T>, q: &PopularityProfile<T>) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::param(format!(
            "profiles have lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(p.values()
        .iter()
        .zip(q.values())
        .map(|(&a, &b)| (a - b).abs())
        .fold(T::zero(), T::max))
}
