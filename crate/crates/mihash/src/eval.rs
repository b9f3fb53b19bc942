//! Retrieval evaluation: ranked lists under Hamming distance, average
//! precision and (N)DCG, mAP over query sets, area under a metric
//! curve, Pearson correlation, and the randomized checkpoint schedule
//! used to sample a training run.
//!
//! Ranking is exhaustive: every table entry is scored and sorted by
//! ascending distance, ties broken by ascending example id, so results
//! are reproducible across runs and implementations.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hashing::{hamming, rebuild_table, BinaryCode, HashMapping, HashTable};
use crate::mi::{mutual_information, soft_histogram, BinningConfig, HistogramPair};
use crate::reservoir;
use crate::seeds::{self, stream};
use crate::types::{euclidean, nearest_rank_quantile, partition, Example, LabelingRule};

/// A retrieval ranking: (example id, relevant) in rank order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList {
    entries: Vec<(u64, bool)>,
}

impl RankedList {
    pub fn new(entries: Vec<(u64, bool)>) -> Self {
        RankedList { entries }
    }

    /// Ranks the whole table by ascending Hamming distance to
    /// `query_code`, ties by ascending id. `exclude_id` drops the
    /// query itself when it happens to live in the table.
    pub fn from_hamming<F>(
        query_code: &BinaryCode,
        table: &HashTable,
        exclude_id: Option<u64>,
        is_relevant: F,
    ) -> Result<Self>
    where
        F: Fn(u64) -> bool,
    {
        let mut scored = Vec::with_capacity(table.len());
        for (id, code) in table.entries() {
            if Some(*id) == exclude_id {
                continue;
            }
            scored.push((hamming(query_code, code)?, *id));
        }
        scored.sort_unstable();
        Ok(RankedList {
            entries: scored
                .into_iter()
                .map(|(_, id)| (id, is_relevant(id)))
                .collect(),
        })
    }

    pub fn entries(&self) -> &[(u64, bool)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn check_cutoff(cutoff: Option<usize>) -> Result<()> {
    if cutoff == Some(0) {
        return Err(Error::domain("cutoff must be at least 1 when given".to_string()));
    }
    Ok(())
}

/// Average precision of a ranked list: mean of precision-at-hit over
/// relevant ranks within the cutoff, divided by min(#relevant, cutoff)
/// so a fully frontloaded list scores 1. Zero when nothing is
/// relevant.
pub fn average_precision(rl: &RankedList, cutoff: Option<usize>) -> Result<f64> {
    check_cutoff(cutoff)?;
    let total_relevant = rl.entries.iter().filter(|(_, r)| *r).count();
    if total_relevant == 0 {
        return Ok(0.0);
    }
    let upto = cutoff.unwrap_or(rl.len()).min(rl.len());
    let denom = match cutoff {
        Some(c) => total_relevant.min(c),
        None => total_relevant,
    } as f64;
    let mut hits = 0u64;
    let mut sum = 0.0;
    for (i, (_, rel)) in rl.entries.iter().take(upto).enumerate() {
        if *rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / denom)
}

/// Discounted cumulative gain with binary relevance: sum over
/// relevant ranks i (1-based) of 1 / log2(i + 1).
pub fn dcg(rl: &RankedList, cutoff: Option<usize>) -> Result<f64> {
    check_cutoff(cutoff)?;
    let upto = cutoff.unwrap_or(rl.len()).min(rl.len());
    Ok(rl
        .entries
        .iter()
        .take(upto)
        .enumerate()
        .filter(|(_, (_, rel))| *rel)
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum())
}

/// DCG normalized by the ideal ordering under the same cutoff. Zero
/// when nothing is relevant.
pub fn ndcg(rl: &RankedList, cutoff: Option<usize>) -> Result<f64> {
    check_cutoff(cutoff)?;
    let total_relevant = rl.entries.iter().filter(|(_, r)| *r).count();
    if total_relevant == 0 {
        return Ok(0.0);
    }
    let upto = cutoff.unwrap_or(rl.len()).min(rl.len());
    let ideal: f64 = (0..total_relevant.min(upto))
        .map(|i| 1.0 / ((i + 2) as f64).log2())
        .sum();
    Ok(dcg(rl, cutoff)? / ideal)
}

fn index_by_id(retrieval: &[Example]) -> Result<HashMap<u64, &Example>> {
    let mut map = HashMap::with_capacity(retrieval.len());
    for x in retrieval {
        if map.insert(x.id, x).is_some() {
            return Err(Error::domain(format!("duplicate example id {}", x.id)));
        }
    }
    Ok(map)
}

/// Ids of table entries relevant to `query` under the labeling rule.
/// Class labeling needs labels on the query and every table-backed
/// example; percentile labeling thresholds true feature distances at
/// the per-query nearest-rank quantile (ties included).
fn relevant_ids(
    query: &Example,
    table: &HashTable,
    by_id: &HashMap<u64, &Example>,
    labeling: &LabelingRule,
) -> Result<Vec<u64>> {
    let member = |id: u64| -> Result<&Example> {
        by_id.get(&id).copied().ok_or_else(|| {
            Error::domain(format!("table entry {id} missing from retrieval set"))
        })
    };
    match labeling {
        LabelingRule::Class => {
            let q_label = query.label.ok_or(Error::MissingLabel { id: query.id })?;
            let mut out = Vec::new();
            for (id, _) in table.entries() {
                if *id == query.id {
                    continue;
                }
                let x = member(*id)?;
                let label = x.label.ok_or(Error::MissingLabel { id: x.id })?;
                if label == q_label {
                    out.push(*id);
                }
            }
            Ok(out)
        }
        LabelingRule::DistancePercentile(p) => {
            LabelingRule::DistancePercentile(*p).validate()?;
            let mut ids = Vec::new();
            let mut dists = Vec::new();
            for (id, _) in table.entries() {
                if *id == query.id {
                    continue;
                }
                ids.push(*id);
                dists.push(euclidean(&query.features, &member(*id)?.features)?);
            }
            if ids.is_empty() {
                return Err(Error::EmptyPool);
            }
            let threshold = nearest_rank_quantile(&dists, *p);
            Ok(ids
                .into_iter()
                .zip(&dists)
                .filter(|(_, d)| **d <= threshold)
                .map(|(id, _)| id)
                .collect())
        }
    }
}

/// Mean average precision of `queries` against a hash table. Queries
/// are encoded with `mapping` (the mapping the table was built from,
/// in the streaming setting the snapshot), ranked exhaustively, and
/// scored against ground truth from the labeling rule over the true
/// retrieval examples.
pub fn mean_ap(
    queries: &[Example],
    mapping: &HashMapping,
    table: &HashTable,
    retrieval: &[Example],
    labeling: &LabelingRule,
    cutoff: Option<usize>,
) -> Result<f64> {
    check_cutoff(cutoff)?;
    if queries.is_empty() {
        return Err(Error::domain("mean_ap needs at least one query".to_string()));
    }
    if table.is_empty() {
        return Err(Error::domain("mean_ap needs a non-empty table".to_string()));
    }
    let by_id = index_by_id(retrieval)?;
    let aps: Vec<f64> = queries
        .par_iter()
        .map(|q| -> Result<f64> {
            let relevant: std::collections::HashSet<u64> =
                relevant_ids(q, table, &by_id, labeling)?.into_iter().collect();
            let code = mapping.encode(&q.features)?;
            let rl = RankedList::from_hamming(&code, table, Some(q.id), |id| {
                relevant.contains(&id)
            })?;
            average_precision(&rl, cutoff)
        })
        .collect::<Result<_>>()?;
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Area under a (stream position, metric) curve, trapezoidal and
/// normalized by the position span, so a constant curve returns the
/// constant. Positions must be strictly increasing within
/// [1, total_examples] and there must be at least two points.
pub fn auc_over_checkpoints(curve: &[(u64, f64)], total_examples: u64) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::domain(format!(
            "AUC needs at least 2 checkpoints, got {}",
            curve.len()
        )));
    }
    for pair in curve.windows(2) {
        if pair[1].0 <= pair[0].0 {
            return Err(Error::domain(
                "checkpoint positions must be strictly increasing".to_string(),
            ));
        }
    }
    let first = curve.first().unwrap();
    let last = curve.last().unwrap();
    if first.0 < 1 || last.0 > total_examples {
        return Err(Error::domain(format!(
            "checkpoint positions must lie in [1, {total_examples}]"
        )));
    }
    if curve.iter().any(|(_, v)| !v.is_finite()) {
        return Err(Error::domain("non-finite metric value in curve".to_string()));
    }
    let mut area = 0.0;
    for pair in curve.windows(2) {
        let dx = (pair[1].0 - pair[0].0) as f64;
        area += dx * 0.5 * (pair[0].1 + pair[1].1);
    }
    Ok(area / (last.0 - first.0) as f64)
}

/// Sample Pearson correlation coefficient. Errors on fewer than two
/// points, mismatched lengths, or zero variance on either side.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::domain("correlation needs at least 2 points".to_string()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx <= 0.0 || vy <= 0.0 {
        return Err(Error::domain(
            "correlation undefined under zero variance".to_string(),
        ));
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

/// Stream positions at which a training run is evaluated: `count`
/// strictly increasing positions in [1, total], equally spaced and
/// then individually jittered. Deterministic in the seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointSchedule {
    positions: Vec<u64>,
}

impl CheckpointSchedule {
    pub fn generate(total: u64, count: usize, seed: u64) -> Result<Self> {
        if count < 2 || (count as u64) > total {
            return Err(Error::domain(format!(
                "checkpoint count must lie in [2, {total}], got {count}"
            )));
        }
        let mut rng = seeds::sub_rng(seed, stream::CHECKPOINTS);
        let jitter = (total / (4 * count as u64)).max(1) as i64;
        let mut positions: Vec<u64> = (1..=count as u64)
            .map(|i| {
                let base = (i as f64 * total as f64 / count as f64).round() as i64;
                let j = rng.random_range(-jitter..=jitter);
                (base + j).clamp(1, total as i64) as u64
            })
            .collect();
        positions.sort_unstable();
        // Forward pass restores strict increase after jitter; the
        // backward pass pulls any overflow back inside [1, total].
        // Both always succeed because count <= total.
        for i in 1..positions.len() {
            if positions[i] <= positions[i - 1] {
                positions[i] = positions[i - 1] + 1;
            }
        }
        let last = positions.len() - 1;
        positions[last] = positions[last].min(total);
        for i in (0..last).rev() {
            positions[i] = positions[i].min(positions[i + 1] - 1);
        }
        debug_assert!(positions[0] >= 1);
        Ok(CheckpointSchedule { positions })
    }

    pub fn positions(&self) -> &[u64] {
        &self.positions
    }

    pub fn contains(&self, position: u64) -> bool {
        self.positions.binary_search(&position).is_ok()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// One random mapping's scores in a correlation study.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CorrelationRow {
    pub mapping_index: usize,
    pub mi: f64,
    pub ap: f64,
    pub dcg: f64,
    pub ndcg: f64,
}

/// Paired (MI, retrieval metric) scores over random mappings, with
/// Pearson coefficients when defined.
#[derive(Debug, Clone)]
pub struct CorrelationStudy {
    pub rows: Vec<CorrelationRow>,
    pub pearson_mi_ap: Option<f64>,
    pub pearson_mi_dcg: Option<f64>,
    pub pearson_mi_ndcg: Option<f64>,
}

/// Scores `n_mappings` random Gaussian mappings on one dataset: for
/// each mapping, mean per-query MI on binary codes and mean AP, DCG,
/// NDCG of the induced rankings. A strong MI-metric correlation is
/// what justifies optimizing MI when the retrieval metric itself is
/// not differentiable.
pub fn correlation_study(
    dataset: &[Example],
    n_mappings: usize,
    bits: usize,
    n_queries: usize,
    labeling: &LabelingRule,
    seed: u64,
) -> Result<CorrelationStudy> {
    if n_mappings == 0 {
        return Err(Error::domain("need at least one mapping".to_string()));
    }
    if n_queries == 0 || n_queries + 2 > dataset.len() {
        return Err(Error::domain(format!(
            "need 1 <= n_queries <= dataset - 2, got {n_queries} of {}",
            dataset.len()
        )));
    }
    labeling.validate()?;
    let dim = dataset[0].dim();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    {
        use rand::seq::SliceRandom;
        let mut rng = seeds::sub_rng(seed, stream::SPLIT);
        order.shuffle(&mut rng);
    }
    let queries: Vec<Example> = order[..n_queries].iter().map(|i| dataset[*i].clone()).collect();
    let pool: Vec<Example> = order[n_queries..].iter().map(|i| dataset[*i].clone()).collect();
    let binning = BinningConfig::for_bits(bits)?;
    let base = seeds::sub_seed(seed, stream::CORRELATE);

    let rows: Vec<CorrelationRow> = (0..n_mappings)
        .into_par_iter()
        .map(|j| -> Result<CorrelationRow> {
            let mapping =
                HashMapping::random_gaussian(dim, bits, 10.0, base.wrapping_add(j as u64))?;
            let table = rebuild_table(&mapping, &pool, 1)?;
            let by_id = index_by_id(&pool)?;
            let mut mi_sum = 0.0;
            let mut ap_sum = 0.0;
            let mut dcg_sum = 0.0;
            let mut ndcg_sum = 0.0;
            for q in &queries {
                mi_sum += query_mi(q, &mapping, &table, &pool, &binning, labeling)?;
                let relevant: std::collections::HashSet<u64> =
                    relevant_ids(q, &table, &by_id, labeling)?.into_iter().collect();
                let code = mapping.encode(&q.features)?;
                let rl = RankedList::from_hamming(&code, &table, Some(q.id), |id| {
                    relevant.contains(&id)
                })?;
                ap_sum += average_precision(&rl, None)?;
                dcg_sum += dcg(&rl, None)?;
                ndcg_sum += ndcg(&rl, None)?;
            }
            let n = queries.len() as f64;
            Ok(CorrelationRow {
                mapping_index: j,
                mi: mi_sum / n,
                ap: ap_sum / n,
                dcg: dcg_sum / n,
                ndcg: ndcg_sum / n,
            })
        })
        .collect::<Result<_>>()?;

    let mi: Vec<f64> = rows.iter().map(|r| r.mi).collect();
    let corr = |metric: Vec<f64>| -> Option<f64> { pearson(&mi, &metric).ok() };
    Ok(CorrelationStudy {
        pearson_mi_ap: corr(rows.iter().map(|r| r.ap).collect()),
        pearson_mi_dcg: corr(rows.iter().map(|r| r.dcg).collect()),
        pearson_mi_ndcg: corr(rows.iter().map(|r| r.ndcg).collect()),
        rows,
    })
}

/// Per-query MI of the query's distance histograms over the pool,
/// using the table's binary codes. Degenerate partitions score 0.
fn query_mi(
    query: &Example,
    mapping: &HashMapping,
    table: &HashTable,
    pool: &[Example],
    binning: &BinningConfig,
    labeling: &LabelingRule,
) -> Result<f64> {
    let part = partition(query, pool, labeling)?;
    if part.is_degenerate() {
        return Ok(0.0);
    }
    let qcode = mapping.encode(&query.features)?;
    let side = |members: &[&Example]| -> Result<Vec<f64>> {
        members
            .iter()
            .map(|x| {
                let code = table.get(x.id).ok_or_else(|| {
                    Error::domain(format!("pool example {} missing from table", x.id))
                })?;
                Ok(f64::from(hamming(&qcode, code)?))
            })
            .collect()
    };
    let d_plus = side(&part.neighbors)?;
    let d_minus = side(&part.non_neighbors)?;
    let n = (d_plus.len() + d_minus.len()) as f64;
    let h = HistogramPair {
        p_plus: soft_histogram(&d_plus, binning)?,
        p_minus: soft_histogram(&d_minus, binning)?,
        prior_plus: d_plus.len() as f64 / n,
        prior_minus: d_minus.len() as f64 / n,
    };
    mutual_information(&h)
}

/// Convenience for scoring a mapping on a labeled set the way the
/// reservoir quality does, but over an arbitrary slice.
pub fn set_quality(
    items: &[Example],
    mapping: &HashMapping,
    binning: &BinningConfig,
    labeling: &LabelingRule,
) -> Result<f64> {
    reservoir::quality_over(items, mapping, binning, labeling)
}
