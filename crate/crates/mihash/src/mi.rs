//! Mutual information between neighborhood membership and code
//! distance, estimated over a neighbor partition and differentiable
//! through a soft histogram.
//!
//! For an anchor, the distances from its code to neighbor codes and to
//! non-neighbor codes form two distributions. The quality of a mapping
//! for that anchor is the mutual information I(D; C) between the
//! distance D and the neighbor indicator C, in bits. High MI means the
//! two distance profiles are well separated, which is exactly what
//! makes ranked retrieval around the anchor work.
//!
//! Distances are binned with a triangular kernel on `bins + 1` centers
//! `v_k = k * delta`, `delta = bits / bins`, so every histogram entry
//! is piecewise-linear in the distances and the whole objective admits
//! subgradients. The kernel gradient takes the right branch (-1/delta)
//! exactly at a bin center.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::{hamming, relaxed_distance, HashMapping};
use crate::types::NeighborPartition;

/// Validation slack for histogram sums and priors.
pub const HIST_SUM_TOL: f64 = 1e-9;

/// Soft-binning layout for distances in [0, bits].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningConfig {
    /// Code width; distances live in [0, bits].
    pub bits: usize,
    /// Number of intervals; there are `bins + 1` centers.
    pub bins: usize,
}

impl BinningConfig {
    pub fn new(bits: usize, bins: usize) -> Result<Self> {
        if bits == 0 || bins == 0 {
            return Err(Error::domain(format!(
                "binning needs bits >= 1 and bins >= 1, got bits={bits} bins={bins}"
            )));
        }
        Ok(BinningConfig { bits, bins })
    }

    /// One bin per Hamming value, the default layout.
    pub fn for_bits(bits: usize) -> Result<Self> {
        Self::new(bits, bits)
    }

    /// Bin spacing.
    pub fn delta(&self) -> f64 {
        self.bits as f64 / self.bins as f64
    }

    /// Center of bin `k`.
    pub fn center(&self, k: usize) -> f64 {
        k as f64 * self.delta()
    }

    fn check_dist(&self, dist: f64) -> Result<()> {
        if !(dist >= 0.0 && dist <= self.bits as f64) {
            return Err(Error::domain(format!(
                "distance {dist} outside [0, {}]",
                self.bits
            )));
        }
        Ok(())
    }

    fn check_bin(&self, k: usize) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::domain("binning needs at least one interval".to_string()));
        }
        if k > self.bins {
            return Err(Error::domain(format!(
                "bin {k} out of range 0..={}",
                self.bins
            )));
        }
        Ok(())
    }
}

/// Triangular kernel weight of `dist` at bin `k`: 1 at the center,
/// falling linearly to 0 one spacing away. Weights over all bins sum
/// to 1 for any in-range distance.
pub fn bin_weight(dist: f64, k: usize, cfg: &BinningConfig) -> Result<f64> {
    cfg.check_dist(dist)?;
    cfg.check_bin(k)?;
    let delta = cfg.delta();
    Ok((1.0 - (dist - cfg.center(k)).abs() / delta).max(0.0))
}

/// Subgradient of [`bin_weight`] in the distance: +1/delta on the
/// rising branch, -1/delta on the falling branch, 0 outside. At a bin
/// center the falling branch wins; at the far domain edge the closing
/// branch is used so the weights still sum to a constant.
pub fn bin_weight_grad(dist: f64, k: usize, cfg: &BinningConfig) -> Result<f64> {
    cfg.check_dist(dist)?;
    cfg.check_bin(k)?;
    let delta = cfg.delta();
    // Branch edges are the neighboring centers, computed by the same
    // expression everywhere: with a non-dyadic spacing, `center(k) +
    // delta` can differ from `center(k+1)` by an ulp and two bins
    // would then disagree about who owns the boundary.
    if k == cfg.bins {
        // Last bin has only the rising branch, closed at the top.
        return Ok(if dist >= cfg.center(k - 1) { 1.0 / delta } else { 0.0 });
    }
    let falling_top = if k + 1 == cfg.bins {
        dist <= cfg.center(k + 1)
    } else {
        dist < cfg.center(k + 1)
    };
    if dist >= cfg.center(k) && falling_top {
        Ok(-1.0 / delta)
    } else if k >= 1 && dist >= cfg.center(k - 1) && dist < cfg.center(k) {
        Ok(1.0 / delta)
    } else {
        Ok(0.0)
    }
}

/// Conditional distance histograms for one anchor: neighbors (plus)
/// and non-neighbors (minus), each normalized, with class priors.
/// An empty side carries an all-zero histogram and a zero prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramPair {
    pub p_plus: Vec<f64>,
    pub p_minus: Vec<f64>,
    pub prior_plus: f64,
    pub prior_minus: f64,
}

impl HistogramPair {
    pub fn validate(&self) -> Result<()> {
        if self.p_plus.len() != self.p_minus.len() || self.p_plus.is_empty() {
            return Err(Error::domain(
                "histogram sides must be non-empty and equal-length".to_string(),
            ));
        }
        if self.prior_plus < 0.0
            || self.prior_minus < 0.0
            || (self.prior_plus + self.prior_minus - 1.0).abs() > HIST_SUM_TOL
        {
            return Err(Error::domain(format!(
                "priors must be non-negative and sum to 1, got ({}, {})",
                self.prior_plus, self.prior_minus
            )));
        }
        for (side, prior) in [
            (&self.p_plus, self.prior_plus),
            (&self.p_minus, self.prior_minus),
        ] {
            if side.iter().any(|p| *p < -1e-12) {
                return Err(Error::domain("negative histogram entry".to_string()));
            }
            let sum: f64 = side.iter().sum();
            let empty = sum.abs() <= HIST_SUM_TOL;
            if empty {
                if prior > 1e-12 {
                    return Err(Error::domain(
                        "empty histogram side with non-zero prior".to_string(),
                    ));
                }
            } else if (sum - 1.0).abs() > HIST_SUM_TOL {
                return Err(Error::domain(format!(
                    "histogram side sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }

    /// Number of bin centers per side.
    pub fn len(&self) -> usize {
        self.p_plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_plus.is_empty()
    }

    /// Pointwise overlap between the two conditionals: sum of
    /// min(p+, p-). 0 for disjoint supports, 1 for identical ones.
    pub fn overlap(&self) -> f64 {
        self.p_plus
            .iter()
            .zip(&self.p_minus)
            .map(|(a, b)| a.min(*b))
            .sum()
    }
}

/// Which code representation distances are measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeKind {
    Binary,
    Relaxed,
}

/// Shannon entropy in bits, with 0 log 0 taken as 0.
pub fn entropy_bits(p: &[f64]) -> f64 {
    p.iter()
        .filter(|v| **v > 0.0)
        .map(|v| -v * v.log2())
        .sum()
}

pub(crate) fn soft_histogram(dists: &[f64], cfg: &BinningConfig) -> Result<Vec<f64>> {
    let mut h = vec![0.0; cfg.bins + 1];
    if dists.is_empty() {
        return Ok(h);
    }
    let inv_n = 1.0 / dists.len() as f64;
    let delta = cfg.delta();
    for &d in dists {
        let j = ((d / delta).floor() as usize).min(cfg.bins);
        h[j] += bin_weight(d, j, cfg)? * inv_n;
        if j + 1 <= cfg.bins {
            h[j + 1] += bin_weight(d, j + 1, cfg)? * inv_n;
        }
    }
    Ok(h)
}

fn partition_distances(
    part: &NeighborPartition,
    mapping: &HashMapping,
    kind: CodeKind,
) -> Result<(Vec<f64>, Vec<f64>)> {
    match kind {
        CodeKind::Binary => {
            let anchor = mapping.encode(&part.anchor.features)?;
            let side = |items: &[&crate::types::Example]| -> Result<Vec<f64>> {
                items
                    .iter()
                    .map(|x| Ok(f64::from(hamming(&anchor, &mapping.encode(&x.features)?)?)))
                    .collect()
            };
            Ok((side(&part.neighbors)?, side(&part.non_neighbors)?))
        }
        CodeKind::Relaxed => {
            let anchor = mapping.encode_relaxed(&part.anchor.features)?;
            let side = |items: &[&crate::types::Example]| -> Result<Vec<f64>> {
                items
                    .iter()
                    .map(|x| relaxed_distance(&anchor, &mapping.encode_relaxed(&x.features)?))
                    .collect()
            };
            Ok((side(&part.neighbors)?, side(&part.non_neighbors)?))
        }
    }
}

/// Bins the anchor-to-member distances of a partition into conditional
/// histograms with member-count priors. Errors when both sides are
/// empty or the binning does not match the mapping width.
pub fn estimate_histograms(
    part: &NeighborPartition,
    mapping: &HashMapping,
    cfg: &BinningConfig,
    kind: CodeKind,
) -> Result<HistogramPair> {
    if cfg.bits != mapping.bits() {
        return Err(Error::DimensionMismatch {
            expected: mapping.bits(),
            got: cfg.bits,
        });
    }
    let n_plus = part.neighbors.len();
    let n_minus = part.non_neighbors.len();
    if n_plus + n_minus == 0 {
        return Err(Error::domain(
            "cannot estimate histograms for an anchor with no members".to_string(),
        ));
    }
    let (d_plus, d_minus) = partition_distances(part, mapping, kind)?;
    let n = (n_plus + n_minus) as f64;
    Ok(HistogramPair {
        p_plus: soft_histogram(&d_plus, cfg)?,
        p_minus: soft_histogram(&d_minus, cfg)?,
        prior_plus: n_plus as f64 / n,
        prior_minus: n_minus as f64 / n,
    })
}

/// Mutual information I(D; C) in bits between code distance and
/// neighbor membership. Zero when either side is empty. Computed in
/// the relative-entropy form, which keeps it non-negative.
pub fn mutual_information(h: &HistogramPair) -> Result<f64> {
    h.validate()?;
    if h.prior_plus <= 0.0 || h.prior_minus <= 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for k in 0..h.len() {
        let mix = h.prior_plus * h.p_plus[k] + h.prior_minus * h.p_minus[k];
        if h.p_plus[k] > 0.0 {
            mi += h.prior_plus * h.p_plus[k] * (h.p_plus[k] / mix).log2();
        }
        if h.p_minus[k] > 0.0 {
            mi += h.prior_minus * h.p_minus[k] * (h.p_minus[k] / mix).log2();
        }
    }
    Ok(mi.max(0.0))
}

/// Gradients of the mutual information in each histogram entry:
/// `prior * (log2 p_side[k] - log2 p_mix[k])`, and 0 wherever the
/// side's entry is 0.
pub fn mi_gradient_wrt_histograms(h: &HistogramPair) -> Result<(Vec<f64>, Vec<f64>)> {
    h.validate()?;
    let mut g_plus = vec![0.0; h.len()];
    let mut g_minus = vec![0.0; h.len()];
    for k in 0..h.len() {
        let mix = h.prior_plus * h.p_plus[k] + h.prior_minus * h.p_minus[k];
        if h.p_plus[k] > 0.0 && h.prior_plus > 0.0 {
            g_plus[k] = h.prior_plus * (h.p_plus[k].log2() - mix.log2());
        }
        if h.p_minus[k] > 0.0 && h.prior_minus > 0.0 {
            g_minus[k] = h.prior_minus * (h.p_minus[k].log2() - mix.log2());
        }
    }
    Ok((g_plus, g_minus))
}

/// Gradients of the mutual information in the relaxed codes of one
/// partition. `d_members` is ordered neighbors-then-non-neighbors.
#[derive(Debug, Clone)]
pub struct MIGradients {
    pub d_anchor: Vec<f64>,
    pub d_members: Vec<(u64, Vec<f64>)>,
}

/// Mutual information and its code gradients from raw relaxed codes.
#[derive(Debug, Clone)]
pub struct CodeGradients {
    pub mi: f64,
    pub anchor: Vec<f64>,
    pub plus: Vec<Vec<f64>>,
    pub minus: Vec<Vec<f64>>,
}

/// Core differentiation: MI of the soft distance histograms built from
/// `anchor` vs. the two member code sets, plus gradients in every code
/// coordinate. Both sides must be non-empty.
pub fn mi_code_gradients(
    anchor: &[f64],
    plus: &[Vec<f64>],
    minus: &[Vec<f64>],
    cfg: &BinningConfig,
) -> Result<CodeGradients> {
    if plus.is_empty() || minus.is_empty() {
        return Err(Error::domain(
            "code gradients need a non-degenerate partition".to_string(),
        ));
    }
    if anchor.len() != cfg.bits {
        return Err(Error::DimensionMismatch {
            expected: cfg.bits,
            got: anchor.len(),
        });
    }
    let d_plus: Vec<f64> = plus
        .iter()
        .map(|c| relaxed_distance(anchor, c))
        .collect::<Result<_>>()?;
    let d_minus: Vec<f64> = minus
        .iter()
        .map(|c| relaxed_distance(anchor, c))
        .collect::<Result<_>>()?;
    let n = (plus.len() + minus.len()) as f64;
    let h = HistogramPair {
        p_plus: soft_histogram(&d_plus, cfg)?,
        p_minus: soft_histogram(&d_minus, cfg)?,
        prior_plus: plus.len() as f64 / n,
        prior_minus: minus.len() as f64 / n,
    };
    let mi = mutual_information(&h)?;
    let (g_plus, g_minus) = mi_gradient_wrt_histograms(&h)?;

    // dI/d(dist_x) = sum_k g[k] * dweight(dist_x, k)/d(dist); only the
    // bins bracketing the distance contribute.
    let dist_coeff = |d: f64, g: &[f64], side_n: f64| -> Result<f64> {
        let delta = cfg.delta();
        let j = ((d / delta).floor() as isize).clamp(0, cfg.bins as isize) as usize;
        let lo = j.saturating_sub(1);
        let hi = (j + 2).min(cfg.bins);
        let mut c = 0.0;
        for k in lo..=hi {
            if g[k] != 0.0 {
                c += g[k] * bin_weight_grad(d, k, cfg)?;
            }
        }
        Ok(c / side_n)
    };

    let bits = cfg.bits;
    let mut anchor_grad = vec![0.0; bits];
    let mut plus_grads = Vec::with_capacity(plus.len());
    let mut minus_grads = Vec::with_capacity(minus.len());
    for (codes, dists, g, out) in [
        (plus, &d_plus, &g_plus, &mut plus_grads),
        (minus, &d_minus, &g_minus, &mut minus_grads),
    ] {
        let side_n = codes.len() as f64;
        for (code, &d) in codes.iter().zip(dists) {
            if code.len() != bits {
                return Err(Error::DimensionMismatch {
                    expected: bits,
                    got: code.len(),
                });
            }
            let c = dist_coeff(d, g, side_n)?;
            // d(dist)/d(anchor) = -code/2, d(dist)/d(code) = -anchor/2
            let mut member_grad = vec![0.0; bits];
            for i in 0..bits {
                anchor_grad[i] += c * (-0.5 * code[i]);
                member_grad[i] = c * (-0.5 * anchor[i]);
            }
            out.push(member_grad);
        }
    }
    Ok(CodeGradients {
        mi,
        anchor: anchor_grad,
        plus: plus_grads,
        minus: minus_grads,
    })
}

/// MI gradients in the relaxed codes of the partition's anchor and
/// members. Errors on a degenerate partition.
pub fn mi_gradient_wrt_codes(
    part: &NeighborPartition,
    mapping: &HashMapping,
    cfg: &BinningConfig,
) -> Result<MIGradients> {
    let (_, grads) = mi_loss_and_grad_inner(part, mapping, cfg, false)?;
    Ok(grads)
}

/// Training objective: loss = -MI on relaxed codes, with gradients to
/// match. Minimizing the loss maximizes the anchor's mutual
/// information.
pub fn mi_loss_and_grad(
    part: &NeighborPartition,
    mapping: &HashMapping,
    cfg: &BinningConfig,
) -> Result<(f64, MIGradients)> {
    mi_loss_and_grad_inner(part, mapping, cfg, true)
}

fn mi_loss_and_grad_inner(
    part: &NeighborPartition,
    mapping: &HashMapping,
    cfg: &BinningConfig,
    negate: bool,
) -> Result<(f64, MIGradients)> {
    if cfg.bits != mapping.bits() {
        return Err(Error::DimensionMismatch {
            expected: mapping.bits(),
            got: cfg.bits,
        });
    }
    if part.is_degenerate() {
        return Err(Error::domain(
            "code gradients need a non-degenerate partition".to_string(),
        ));
    }
    let anchor = mapping.encode_relaxed(&part.anchor.features)?;
    let plus: Vec<Vec<f64>> = part
        .neighbors
        .iter()
        .map(|x| mapping.encode_relaxed(&x.features))
        .collect::<Result<_>>()?;
    let minus: Vec<Vec<f64>> = part
        .non_neighbors
        .iter()
        .map(|x| mapping.encode_relaxed(&x.features))
        .collect::<Result<_>>()?;
    let mut cg = mi_code_gradients(&anchor, &plus, &minus, cfg)?;
    let sign = if negate { -1.0 } else { 1.0 };
    if negate {
        for v in cg.anchor.iter_mut() {
            *v = -*v;
        }
        for side in [&mut cg.plus, &mut cg.minus] {
            for g in side.iter_mut() {
                for v in g.iter_mut() {
                    *v = -*v;
                }
            }
        }
    }
    let mut d_members = Vec::with_capacity(cg.plus.len() + cg.minus.len());
    for (x, g) in part.neighbors.iter().zip(cg.plus) {
        d_members.push((x.id, g));
    }
    for (x, g) in part.non_neighbors.iter().zip(cg.minus) {
        d_members.push((x.id, g));
    }
    Ok((
        sign * cg.mi,
        MIGradients {
            d_anchor: cg.anchor,
            d_members,
        },
    ))
}
