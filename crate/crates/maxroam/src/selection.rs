//! Swap-pair selection strategies for the partition update plan.
//!
//! Every update step releases one parameter a task currently uses (`i_minus`)
//! and claims one parameter the task has never visited (`i_plus`). The two
//! strategies here differ only in how that pair is picked:
//!
//! * [`SelectionStrategy::Uniform`] draws both indices uniformly from their
//!   candidate sets. This is the default; it is what keeps the expected
//!   overlap between task partitions constant while roaming.
//! * [`SelectionStrategy::Cosine`] is fully deterministic given the layer
//!   weights: it releases the active parameter whose summed cosine similarity
//!   to the rest of the active set is lowest, and claims the unvisited
//!   parameter whose summed similarity to the active set is highest. Ties are
//!   broken by lowest parameter index.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Which selection rule a strategy applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionKind {
    Uniform,
    Cosine,
}

impl std::fmt::Display for SelectionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // `pad` rather than `write!` so width specifiers work.
        f.pad(match self {
            SelectionKind::Uniform => "uniform",
            SelectionKind::Cosine => "cosine",
        })
    }
}

impl std::str::FromStr for SelectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SelectionKind::Uniform),
            "cosine" => Ok(SelectionKind::Cosine),
            other => Err(Error::Config(format!(
                "unknown selection strategy {other:?}; expected \"uniform\" or \"cosine\""
            ))),
        }
    }
}

/// A swap-pair selector. The uniform variant owns its RNG so separate runs
/// can use separate streams; the cosine variant is stateless.
#[derive(Debug, Clone)]
pub enum SelectionStrategy {
    Uniform(ChaCha8Rng),
    Cosine,
}

impl SelectionStrategy {
    pub fn uniform(rng: ChaCha8Rng) -> Self {
        SelectionStrategy::Uniform(rng)
    }

    pub fn cosine() -> Self {
        SelectionStrategy::Cosine
    }

    pub fn kind(&self) -> SelectionKind {
        match self {
            SelectionStrategy::Uniform(_) => SelectionKind::Uniform,
            SelectionStrategy::Cosine => SelectionKind::Cosine,
        }
    }

    /// Picks `(i_minus, i_plus)` for one task.
    ///
    /// `active` is the task's current parameter set, `candidates` the indices
    /// it has never visited; both must be nonempty and sorted ascending.
    /// `weights`, required by the cosine rule, holds one flattened weight
    /// vector per parameter of the layer (see
    /// [`MaskedLayer::channel_vectors`](crate::net::MaskedLayer::channel_vectors)).
    /// A missing weight view is a hard error, never a silent fallback to
    /// uniform sampling.
    pub fn select_pair(
        &mut self,
        active: &[usize],
        candidates: &[usize],
        weights: Option<&[Vec<f64>]>,
    ) -> Result<(usize, usize)> {
        match self {
            SelectionStrategy::Uniform(rng) => Ok(uniform_select(active, candidates, rng)),
            SelectionStrategy::Cosine => {
                let weights = weights.ok_or(Error::MissingWeights)?;
                Ok(cosine_select(active, candidates, weights))
            }
        }
    }
}

/// Uniform rule: both draws independent and uniform over their sets.
pub fn uniform_select(active: &[usize], candidates: &[usize], rng: &mut ChaCha8Rng) -> (usize, usize) {
    assert!(!active.is_empty() && !candidates.is_empty());
    let i_minus = active[rng.gen_range(0..active.len())];
    let i_plus = candidates[rng.gen_range(0..candidates.len())];
    (i_minus, i_plus)
}

/// Deterministic rule driven by weight-space redundancy.
///
/// `i_minus` minimizes the summed cosine similarity to the other active
/// parameters; `i_plus` maximizes the summed similarity to the active set.
/// Both sums are evaluated against the active set as it stands before the
/// swap. Ties break toward the lowest parameter index.
pub fn cosine_select(active: &[usize], candidates: &[usize], weights: &[Vec<f64>]) -> (usize, usize) {
    assert!(!active.is_empty() && !candidates.is_empty());

    let mut i_minus = active[0];
    let mut min_sum = f64::INFINITY;
    for &u in active {
        let sum: f64 = active
            .iter()
            .filter(|&&v| v != u)
            .map(|&v| cosine_similarity(&weights[u], &weights[v]))
            .sum();
        if sum < min_sum {
            min_sum = sum;
            i_minus = u;
        }
    }

    let mut i_plus = candidates[0];
    let mut max_sum = f64::NEG_INFINITY;
    for &u in candidates {
        let sum: f64 = active
            .iter()
            .map(|&v| cosine_similarity(&weights[u], &weights[v]))
            .sum();
        if sum > max_sum {
            max_sum = sum;
            i_plus = u;
        }
    }

    (i_minus, i_plus)
}

/// Standard cosine similarity of two equal-length vectors.
///
/// Defined as 0 when either vector has zero norm, so an all-zero parameter
/// behaves as maximally non-redundant rather than poisoning the selection
/// with NaNs. Length mismatch is a caller bug.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len(), "cosine similarity needs equal-length vectors");
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        log::debug!("zero-norm weight vector in cosine selection; similarity taken as 0");
        return 0.0;
    }
    dot / (nu * nv)
}
