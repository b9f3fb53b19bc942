//! Core data types shared across the engine: examples, neighbor
//! partitions, and the labeling rules that define ground-truth
//! relevance.
//!
//! A [`NeighborPartition`] splits a pool of examples, relative to one
//! anchor, into neighbors and non-neighbors. Two rules are supported:
//! shared class label, or a per-anchor Euclidean distance quantile for
//! unlabeled data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One data point in a stream or dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Unique within a dataset; assigned at ingest and stable across splits.
    pub id: u64,
    pub features: Vec<f64>,
    pub label: Option<i32>,
}

impl Example {
    pub fn new(id: u64, features: Vec<f64>, label: Option<i32>) -> Self {
        Example {
            id,
            features,
            label,
        }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// Squared-error-free Euclidean distance between feature vectors.
pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(s.sqrt())
}

/// How neighbor/non-neighbor ground truth is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelingRule {
    /// Items sharing the anchor's class label are neighbors.
    Class,
    /// Items within the per-anchor Euclidean distance quantile are
    /// neighbors. The fraction must lie in (0, 1).
    DistancePercentile(f64),
}

impl LabelingRule {
    pub fn validate(&self) -> Result<()> {
        if let LabelingRule::DistancePercentile(p) = self {
            if !(*p > 0.0 && *p < 1.0) {
                return Err(Error::domain(format!(
                    "distance percentile must lie in (0, 1), got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// A pool split into neighbors and non-neighbors of one anchor.
///
/// The anchor itself is never a member of either side, and every pool
/// item lands on exactly one side.
#[derive(Debug)]
pub struct NeighborPartition<'a> {
    pub anchor: &'a Example,
    pub neighbors: Vec<&'a Example>,
    pub non_neighbors: Vec<&'a Example>,
}

impl<'a> NeighborPartition<'a> {
    /// True when both sides are populated, which every learning step
    /// requires.
    pub fn is_degenerate(&self) -> bool {
        self.neighbors.is_empty() || self.non_neighbors.is_empty()
    }

    pub fn members(&self) -> impl Iterator<Item = &'a Example> + '_ {
        self.neighbors
            .iter()
            .chain(self.non_neighbors.iter())
            .copied()
    }
}

/// Partitions `pool` by class label: items sharing the anchor's label
/// are neighbors. The anchor is excluded by id if present in the pool.
///
/// Errors if the anchor or any pool item is unlabeled. An empty pool
/// yields two empty sides.
pub fn partition_by_class<'a>(
    anchor: &'a Example,
    pool: &'a [Example],
) -> Result<NeighborPartition<'a>> {
    let anchor_label = anchor.label.ok_or(Error::MissingLabel { id: anchor.id })?;
    let mut neighbors = Vec::new();
    let mut non_neighbors = Vec::new();
    for x in pool {
        if x.id == anchor.id {
            continue;
        }
        let label = x.label.ok_or(Error::MissingLabel { id: x.id })?;
        if label == anchor_label {
            neighbors.push(x);
        } else {
            non_neighbors.push(x);
        }
    }
    Ok(NeighborPartition {
        anchor,
        neighbors,
        non_neighbors,
    })
}

/// Partitions `pool` by the per-anchor Euclidean distance quantile:
/// the nearest `percentile` fraction (nearest-rank rule) are neighbors.
/// Items tied with the threshold distance count as neighbors, so the
/// neighbor side can exceed the nominal count under ties.
///
/// The anchor is excluded by id. Errors if the pool is empty after
/// exclusion or the percentile is outside (0, 1).
pub fn partition_by_distance<'a>(
    anchor: &'a Example,
    pool: &'a [Example],
    percentile: f64,
) -> Result<NeighborPartition<'a>> {
    LabelingRule::DistancePercentile(percentile).validate()?;
    let candidates: Vec<&Example> = pool.iter().filter(|x| x.id != anchor.id).collect();
    if candidates.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut dists = Vec::with_capacity(candidates.len());
    for x in &candidates {
        dists.push(euclidean(&anchor.features, &x.features)?);
    }
    let threshold = nearest_rank_quantile(&dists, percentile);
    let mut neighbors = Vec::new();
    let mut non_neighbors = Vec::new();
    for (x, d) in candidates.into_iter().zip(&dists) {
        if *d <= threshold {
            neighbors.push(x);
        } else {
            non_neighbors.push(x);
        }
    }
    Ok(NeighborPartition {
        anchor,
        neighbors,
        non_neighbors,
    })
}

/// Applies whichever rule is configured.
pub fn partition<'a>(
    anchor: &'a Example,
    pool: &'a [Example],
    rule: &LabelingRule,
) -> Result<NeighborPartition<'a>> {
    match rule {
        LabelingRule::Class => partition_by_class(anchor, pool),
        LabelingRule::DistancePercentile(p) => partition_by_distance(anchor, pool, *p),
    }
}

/// Nearest-rank quantile: the k-th smallest value with k = ceil(p * n).
pub(crate) fn nearest_rank_quantile(values: &[f64], p: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let n = values.len();
    let k = ((p * n as f64).ceil() as usize).clamp(1, n);
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    sorted[k - 1]
}
