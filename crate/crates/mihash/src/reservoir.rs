//! Uniform reservoir sampling over the stream, and the reservoir-based
//! quality score for a hash mapping.
//!
//! The sampler is the classic replacement scheme: the first `capacity`
//! items fill the reservoir, and the t-th item afterwards replaces a
//! random slot with probability capacity / t, so at any instant every
//! item seen so far is present with equal probability.
//!
//! Quality of a mapping is the average, over reservoir items acting as
//! anchors, of the mutual information between code distance and
//! neighbor membership within the rest of the reservoir. It is the
//! streaming stand-in for retrieval performance on the full dataset.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hashing::{hamming, BinaryCode, HashMapping};
use crate::mi::{mutual_information, soft_histogram, BinningConfig, HistogramPair};
use crate::seeds::{self, stream};
use crate::types::{partition, Example, LabelingRule};

/// Fixed-capacity uniform sample of the stream seen so far.
#[derive(Debug, Clone)]
pub struct Reservoir {
    items: Vec<Example>,
    capacity: usize,
    seen: u64,
    rng: ChaCha8Rng,
}

impl Reservoir {
    /// Creates an empty reservoir. Draws flow from the reservoir
    /// sub-stream of `seed`.
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::domain("reservoir capacity must be at least 1".to_string()));
        }
        Ok(Reservoir {
            items: Vec::with_capacity(capacity),
            capacity,
            seen: 0,
            rng: seeds::sub_rng(seed, stream::RESERVOIR),
        })
    }

    /// Offers one stream item to the sample.
    pub fn observe(&mut self, x: Example) {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(x);
            return;
        }
        let j = self.rng.random_range(0..self.seen);
        if (j as usize) < self.capacity {
            self.items[j as usize] = x;
        }
    }

    pub fn items(&self) -> &[Example] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stream items offered so far.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    /// Average per-anchor mutual information of `mapping` over the
    /// reservoir, on binary codes. Anchors whose partition leaves a
    /// side empty contribute 0. Needs at least 2 items.
    pub fn quality(
        &self,
        mapping: &HashMapping,
        cfg: &BinningConfig,
        labeling: &LabelingRule,
    ) -> Result<f64> {
        quality_over(&self.items, mapping, cfg, labeling)
    }
}

/// [`Reservoir::quality`] over any item slice; exposed for scoring
/// candidate mappings against a frozen set.
pub fn quality_over(
    items: &[Example],
    mapping: &HashMapping,
    cfg: &BinningConfig,
    labeling: &LabelingRule,
) -> Result<f64> {
    if items.len() < 2 {
        return Err(Error::domain(format!(
            "quality needs at least 2 reservoir items, got {}",
            items.len()
        )));
    }
    if cfg.bits != mapping.bits() {
        return Err(Error::DimensionMismatch {
            expected: mapping.bits(),
            got: cfg.bits,
        });
    }
    labeling.validate()?;
    let codes: Vec<BinaryCode> = items
        .par_iter()
        .map(|x| mapping.encode(&x.features))
        .collect::<Result<_>>()?;
    let by_id: std::collections::HashMap<u64, usize> =
        items.iter().enumerate().map(|(i, x)| (x.id, i)).collect();
    if by_id.len() != items.len() {
        return Err(Error::domain("duplicate example ids in reservoir".to_string()));
    }

    let per_anchor: Vec<f64> = (0..items.len())
        .into_par_iter()
        .map(|a| -> Result<f64> {
            let part = partition(&items[a], items, labeling)?;
            if part.is_degenerate() {
                return Ok(0.0);
            }
            let side = |members: &[&Example]| -> Result<Vec<f64>> {
                members
                    .iter()
                    .map(|x| Ok(f64::from(hamming(&codes[a], &codes[by_id[&x.id]])?)))
                    .collect()
            };
            let d_plus = side(&part.neighbors)?;
            let d_minus = side(&part.non_neighbors)?;
            let n = (d_plus.len() + d_minus.len()) as f64;
            let h = HistogramPair {
                p_plus: soft_histogram(&d_plus, cfg)?,
                p_minus: soft_histogram(&d_minus, cfg)?,
                prior_plus: d_plus.len() as f64 / n,
                prior_minus: d_minus.len() as f64 / n,
            };
            mutual_information(&h)
        })
        .collect::<Result<_>>()?;
    // Fixed-order reduction keeps reruns bit-identical.
    Ok(per_anchor.iter().sum::<f64>() / items.len() as f64)
}
