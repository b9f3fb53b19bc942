//! Gradient training of hash mappings against the mutual-information
//! objective: a single momentum-SGD step over one anchor partition,
//! minibatch training over a labeled dataset, and the streaming loop
//! that couples learning with reservoir sampling and table-update
//! policies.
//!
//! The streaming loop can evaluate several update policies in one
//! pass. The learner trajectory (weights, velocity, reservoir) never
//! depends on which tables exist, so running policies side by side is
//! exactly equivalent to independent same-seed runs, at a fraction of
//! the cost.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{mean_ap, CheckpointSchedule};
use crate::hashing::{HashMapping, HashTable, MAX_BITS};
use crate::mi::{mi_code_gradients, BinningConfig};
use crate::reservoir::Reservoir;
use crate::seeds::{self, stream};
use crate::trigger::{TriggerConfig, TriggerState, UpdateLogEntry};
use crate::types::{partition, partition_by_class, Example, LabelingRule, NeighborPartition};

/// No SGD steps run until the reservoir holds at least this many items
/// (or capacity/100, whichever is larger): tiny pools make histogram
/// estimates meaningless.
pub const WARMUP_MIN: usize = 10;

/// Reservoir size below which the streaming learner will not step.
pub fn warmup_threshold(capacity: usize) -> usize {
    (capacity / 100).max(WARMUP_MIN)
}

/// Which training loop a configuration is meant for. `decay_every`
/// counts epochs in batch mode and stream examples online.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Online,
    Batch,
}

/// Hyperparameters shared by both training loops.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub bits: usize,
    /// Sigmoid sharpness of the relaxed codes.
    pub sharpness: f64,
    pub learning_rate: f64,
    /// Momentum coefficient in [0, 1).
    pub momentum: f64,
    /// Learning-rate multiplier applied every `decay_every` units.
    pub decay_factor: f64,
    /// Decay period (epochs in batch mode, examples online); 0 turns
    /// decay off.
    pub decay_every: usize,
    pub minibatch_size: usize,
    /// Batch mode only; 0 returns the initial mapping untouched.
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn online_defaults() -> Self {
        TrainConfig {
            mode: TrainMode::Online,
            bits: 16,
            sharpness: 10.0,
            learning_rate: 0.1,
            momentum: 0.9,
            decay_factor: 0.5,
            decay_every: 0,
            minibatch_size: 1,
            epochs: 1,
            seed: 42,
        }
    }

    pub fn batch_defaults() -> Self {
        TrainConfig {
            mode: TrainMode::Batch,
            minibatch_size: 250,
            epochs: 30,
            learning_rate: 0.001,
            decay_every: 10,
            ..TrainConfig::online_defaults()
        }
    }

    /// Structural invariants. Entry-point loops validate once;
    /// `sgd_step` itself does not, so ablations (e.g. a zero learning
    /// rate) can drive it directly.
    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 || self.bits > MAX_BITS {
            return Err(Error::Config(format!(
                "bits must lie in [1, {MAX_BITS}], got {}",
                self.bits
            )));
        }
        if !(self.sharpness.is_finite() && self.sharpness > 0.0) {
            return Err(Error::Config(format!(
                "sharpness must be positive and finite, got {}",
                self.sharpness
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config(format!(
                "decay_factor must lie in (0, 1], got {}",
                self.decay_factor
            )));
        }
        let minibatch_floor = match self.mode {
            TrainMode::Batch => 2,
            TrainMode::Online => 1,
        };
        if self.minibatch_size < minibatch_floor {
            return Err(Error::Config(format!(
                "minibatch_size must be at least {minibatch_floor} in {:?} mode, got {}",
                self.mode, self.minibatch_size
            )));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::online_defaults()
    }
}

/// Fresh Gaussian mapping for a training run: entries i.i.d.
/// N(0, 1/d), drawn from the run seed's dedicated init stream.
pub fn init_mapping(dim: usize, cfg: &TrainConfig, seed: u64) -> Result<HashMapping> {
    HashMapping::random_gaussian(dim, cfg.bits, cfg.sharpness, seeds::sub_seed(seed, stream::INIT))
}

/// Momentum buffer over the weight matrix, column-major like the
/// mapping's weights.
#[derive(Debug, Clone)]
pub struct Velocity {
    v: Vec<f64>,
}

impl Velocity {
    pub fn zeros(dim: usize, bits: usize) -> Self {
        Velocity { v: vec![0.0; dim * bits] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v
    }

    /// v <- momentum * v - lr * grad; W <- W + v. Rejects non-finite
    /// gradients and weight blow-ups with the offending step attached.
    fn apply(
        &mut self,
        mapping: &mut HashMapping,
        grad: &[f64],
        learning_rate: f64,
        momentum: f64,
        step: u64,
    ) -> Result<()> {
        if grad.len() != self.v.len() {
            return Err(Error::DimensionMismatch {
                expected: self.v.len(),
                got: grad.len(),
            });
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Training {
                step,
                what: format!("non-finite gradient entry at index {i}"),
            });
        }
        let weights = mapping.weights_mut();
        if weights.len() != self.v.len() {
            return Err(Error::DimensionMismatch {
                expected: self.v.len(),
                got: weights.len(),
            });
        }
        for ((v, w), g) in self.v.iter_mut().zip(weights.iter_mut()).zip(grad) {
            *v = momentum * *v - learning_rate * *g;
            *w += *v;
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Training {
                step,
                what: "weights became non-finite after the update".to_string(),
            });
        }
        Ok(())
    }
}

/// Chains one code's loss gradient into weight space. The relaxed code
/// is c = 2 sigmoid(A w_i . x) - 1 per bit, so dc_i/dW[:, i] =
/// A (1 - c_i^2) / 2 * x, and the loss is -MI:
/// dL/dW[:, i] += -g_i * A (1 - c_i^2) / 2 * x.
fn chain_into_weights(
    grad: &mut [f64],
    code: &[f64],
    mi_code_grad: &[f64],
    x: &[f64],
    sharpness: f64,
    dim: usize,
    bits: usize,
) {
    for i in 0..bits {
        let coef = -mi_code_grad[i] * sharpness * (1.0 - code[i] * code[i]) * 0.5;
        if coef == 0.0 {
            continue;
        }
        let col = &mut grad[i * dim..(i + 1) * dim];
        for (g, xj) in col.iter_mut().zip(x) {
            *g += coef * xj;
        }
    }
}

/// Loss (-MI) for one anchor with precomputed relaxed codes, gradient
/// accumulated into `grad` (column-major d x b). Every participant,
/// anchor and members alike, receives its chain-rule share.
#[allow(clippy::too_many_arguments)]
fn accumulate_loss_grad(
    mapping: &HashMapping,
    binning: &BinningConfig,
    anchor_code: &[f64],
    anchor_x: &[f64],
    plus_codes: &[Vec<f64>],
    plus_x: &[&[f64]],
    minus_codes: &[Vec<f64>],
    minus_x: &[&[f64]],
    grad: &mut [f64],
) -> Result<f64> {
    let cg = mi_code_gradients(anchor_code, plus_codes, minus_codes, binning)?;
    let a = mapping.sharpness();
    let (dim, bits) = (mapping.dim(), mapping.bits());
    debug_assert_eq!(grad.len(), dim * bits);
    chain_into_weights(grad, anchor_code, &cg.anchor, anchor_x, a, dim, bits);
    for ((code, g), x) in plus_codes.iter().zip(&cg.plus).zip(plus_x) {
        chain_into_weights(grad, code, g, x, a, dim, bits);
    }
    for ((code, g), x) in minus_codes.iter().zip(&cg.minus).zip(minus_x) {
        chain_into_weights(grad, code, g, x, a, dim, bits);
    }
    Ok(-cg.mi)
}

/// Pairs each member's cached relaxed code with its features.
fn gather_side<'a>(
    side: &[&'a Example],
    codes: &[Vec<f64>],
    in_batch: &HashMap<u64, usize>,
) -> (Vec<Vec<f64>>, Vec<&'a [f64]>) {
    side.iter()
        .map(|m| (codes[in_batch[&m.id]].clone(), m.features.as_slice()))
        .unzip()
}

fn encode_side<'a>(
    mapping: &HashMapping,
    members: &[&'a Example],
) -> Result<(Vec<Vec<f64>>, Vec<&'a [f64]>)> {
    let mut codes = Vec::with_capacity(members.len());
    let mut xs = Vec::with_capacity(members.len());
    for m in members {
        codes.push(mapping.encode_relaxed(&m.features)?);
        xs.push(m.features.as_slice());
    }
    Ok((codes, xs))
}

fn sgd_step_at(
    mapping: &mut HashMapping,
    part: &NeighborPartition,
    cfg: &TrainConfig,
    velocity: &mut Velocity,
    step: u64,
) -> Result<f64> {
    if part.is_degenerate() {
        return Ok(0.0);
    }
    let binning = BinningConfig::for_bits(mapping.bits())?;
    let anchor_code = mapping.encode_relaxed(&part.anchor.features)?;
    let (plus_codes, plus_x) = encode_side(mapping, &part.neighbors)?;
    let (minus_codes, minus_x) = encode_side(mapping, &part.non_neighbors)?;
    let mut grad = vec![0.0; mapping.dim() * mapping.bits()];
    let loss = accumulate_loss_grad(
        mapping,
        &binning,
        &anchor_code,
        &part.anchor.features,
        &plus_codes,
        &plus_x,
        &minus_codes,
        &minus_x,
        &mut grad,
    )?;
    velocity.apply(mapping, &grad, cfg.learning_rate, cfg.momentum, step)?;
    Ok(loss)
}

/// One momentum-SGD step on a single anchor partition. Returns the
/// loss (-MI) at the pre-step weights. A degenerate partition is
/// skipped with zero loss and no weight change.
pub fn sgd_step(
    mapping: &mut HashMapping,
    part: &NeighborPartition,
    cfg: &TrainConfig,
    velocity: &mut Velocity,
) -> Result<f64> {
    sgd_step_at(mapping, part, cfg, velocity, 0)
}

/// Outcome of a training run. Batch runs leave the streaming fields
/// empty. The final mapping is serialized separately in its binary
/// format, not as JSON.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TrainReport {
    #[serde(skip_serializing)]
    pub final_mapping: HashMapping,
    /// (step, loss); steps are minibatch counters in batch mode and
    /// stream positions online. Strictly increasing.
    pub loss_trace: Vec<(u64, f64)>,
    /// (stream position, mAP) at evaluation checkpoints.
    pub checkpoint_metrics: Vec<(u64, f64)>,
    pub update_log: Vec<UpdateLogEntry>,
    /// Table builds performed, the initial one included; 0 in batch
    /// mode, which maintains no table.
    pub update_count: u64,
    /// End-of-stream mAP of the maintained table; None in batch mode
    /// or without queries.
    pub final_map: Option<f64>,
}

/// Minibatch training over a labeled dataset: every epoch shuffles,
/// every element of each minibatch serves once as anchor partitioned
/// by class against the rest of the minibatch, gradients from all
/// valid anchors are averaged into one momentum step.
pub fn train_batch(dataset: &[Example], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if cfg.minibatch_size < 2 {
        return Err(Error::Config(format!(
            "batch training needs minibatch_size >= 2, got {}",
            cfg.minibatch_size
        )));
    }
    if dataset.is_empty() {
        return Err(Error::domain("batch training needs a non-empty dataset".to_string()));
    }
    let dim = dataset[0].dim();
    let bits = cfg.bits;
    let mut slot = HashMap::with_capacity(dataset.len());
    for (i, x) in dataset.iter().enumerate() {
        if slot.insert(x.id, i).is_some() {
            return Err(Error::domain(format!("duplicate example id {}", x.id)));
        }
    }

    let mut mapping = init_mapping(dim, cfg, cfg.seed)?;
    let binning = BinningConfig::for_bits(bits)?;
    let mut velocity = Velocity::zeros(dim, bits);
    let mut rng = seeds::sub_rng(cfg.seed, stream::SHUFFLE);
    let mut learning_rate = cfg.learning_rate;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut loss_trace = Vec::new();
    let mut step: u64 = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_anchors = 0usize;
        for chunk in order.chunks(cfg.minibatch_size) {
            if chunk.len() < 2 {
                continue;
            }
            step += 1;
            let batch: Vec<Example> = chunk.iter().map(|i| dataset[*i].clone()).collect();
            let codes: Vec<Vec<f64>> = batch
                .par_iter()
                .map(|x| mapping.encode_relaxed(&x.features))
                .collect::<Result<_>>()?;
            let in_batch: HashMap<u64, usize> =
                batch.iter().enumerate().map(|(i, x)| (x.id, i)).collect();

            // Anchors run in parallel; the reduction below walks them
            // in batch order so summation stays bit-reproducible.
            let per_anchor: Vec<Option<(f64, Vec<f64>)>> = (0..batch.len())
                .into_par_iter()
                .map(|ai| -> Result<Option<(f64, Vec<f64>)>> {
                    let anchor = &batch[ai];
                    let part = partition_by_class(anchor, &batch)?;
                    if part.is_degenerate() {
                        return Ok(None);
                    }
                    let (plus_codes, plus_x) = gather_side(&part.neighbors, &codes, &in_batch);
                    let (minus_codes, minus_x) = gather_side(&part.non_neighbors, &codes, &in_batch);
                    let mut g = vec![0.0; dim * bits];
                    let loss = accumulate_loss_grad(
                        &mapping,
                        &binning,
                        &codes[ai],
                        &anchor.features,
                        &plus_codes,
                        &plus_x,
                        &minus_codes,
                        &minus_x,
                        &mut g,
                    )?;
                    Ok(Some((loss, g)))
                })
                .collect::<Result<_>>()?;

            let mut grad = vec![0.0; dim * bits];
            let mut loss_sum = 0.0;
            let mut valid = 0usize;
            for entry in per_anchor.into_iter().flatten() {
                loss_sum += entry.0;
                for (g, d) in grad.iter_mut().zip(&entry.1) {
                    *g += d;
                }
                valid += 1;
            }
            if valid == 0 {
                continue;
            }
            let scale = 1.0 / valid as f64;
            for g in grad.iter_mut() {
                *g *= scale;
            }
            velocity.apply(&mut mapping, &grad, learning_rate, cfg.momentum, step)?;
            loss_trace.push((step, loss_sum * scale));
            epoch_anchors += valid;
        }
        if epoch_anchors == 0 {
            log::warn!("epoch {epoch}: every minibatch anchor was degenerate, no steps taken");
        }
        if cfg.decay_every > 0 && (epoch + 1) % cfg.decay_every == 0 {
            learning_rate *= cfg.decay_factor;
        }
    }

    Ok(TrainReport {
        final_mapping: mapping,
        loss_trace,
        checkpoint_metrics: Vec::new(),
        update_log: Vec::new(),
        update_count: 0,
        final_map: None,
    })
}

/// Table-refresh policy evaluated during a streaming run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdatePolicy {
    /// Rebuild only when the candidate mapping beats the snapshot's
    /// reservoir quality by more than `theta`.
    Quality { theta: f64 },
    /// Rebuild at every check unconditionally.
    Periodic,
}

/// A policy plus how often it checks the stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySpec {
    pub policy: UpdatePolicy,
    pub check_interval: u64,
}

/// Per-policy outcome of a shared streaming pass.
#[derive(Debug, Clone)]
pub struct PolicyOutcome {
    pub spec: PolicySpec,
    /// Table builds, the initial one included.
    pub update_count: u64,
    /// One entry per quality check; empty for periodic policies.
    pub update_log: Vec<UpdateLogEntry>,
    /// (stream position, mAP) at each checkpoint.
    pub checkpoint_metrics: Vec<(u64, f64)>,
    /// mAP of the policy's table after the full stream; None without
    /// queries.
    pub final_map: Option<f64>,
}

/// Shared learner trajectory plus one outcome per policy.
#[derive(Debug, Clone)]
pub struct MultiPolicyReport {
    pub final_mapping: HashMapping,
    pub loss_trace: Vec<(u64, f64)>,
    pub outcomes: Vec<PolicyOutcome>,
}

/// Streaming-run configuration around the shared `TrainConfig`.
#[derive(Debug, Clone)]
pub struct OnlineConfig {
    pub train: TrainConfig,
    pub trigger: TriggerConfig,
    pub reservoir_capacity: usize,
    pub labeling: LabelingRule,
    /// Number of randomized evaluation checkpoints; 0 disables
    /// checkpoint metrics. Must not exceed the stream length.
    pub checkpoints: usize,
    /// Ranking cutoff for checkpoint mAP; None ranks the full table.
    pub map_cutoff: Option<usize>,
}

impl OnlineConfig {
    pub fn new(train: TrainConfig, trigger: TriggerConfig) -> Self {
        OnlineConfig {
            train,
            trigger,
            reservoir_capacity: 1000,
            labeling: LabelingRule::Class,
            checkpoints: 50,
            map_cutoff: None,
        }
    }
}

/// Streams `stream` through the learner once while maintaining one
/// hash table per policy over `retrieval_set`. Checkpoint mAP is
/// measured for `queries` against each policy's table with the codes
/// of that policy's snapshot mapping.
///
/// Policies are consulted between examples: after the final example
/// there is no more stream to serve, so the run ends without a
/// closing check.
pub fn train_online_multi(
    stream_data: &[Example],
    retrieval_set: &[Example],
    queries: &[Example],
    cfg: &OnlineConfig,
    policies: &[PolicySpec],
) -> Result<MultiPolicyReport> {
    cfg.train.validate()?;
    cfg.labeling.validate()?;
    cfg.trigger.validate()?;
    if stream_data.is_empty() {
        return Err(Error::domain("online training needs a non-empty stream".to_string()));
    }
    if retrieval_set.is_empty() {
        return Err(Error::domain("online training needs a retrieval set".to_string()));
    }
    if policies.is_empty() {
        return Err(Error::domain("need at least one update policy".to_string()));
    }
    for spec in policies {
        TriggerConfig {
            theta: match spec.policy {
                UpdatePolicy::Quality { theta } => theta,
                UpdatePolicy::Periodic => f64::NEG_INFINITY,
            },
            check_interval: spec.check_interval,
        }
        .validate()?;
    }
    {
        let mut seen = std::collections::HashSet::with_capacity(stream_data.len());
        for x in stream_data {
            if !seen.insert(x.id) {
                return Err(Error::domain(format!("duplicate stream id {}", x.id)));
            }
        }
    }

    let dim = stream_data[0].dim();
    let n = stream_data.len() as u64;
    let seed = cfg.train.seed;
    let mut mapping = init_mapping(dim, &cfg.train, seed)?;
    let binning = BinningConfig::for_bits(cfg.train.bits)?;
    let mut reservoir = Reservoir::new(cfg.reservoir_capacity, seed)?;
    let warmup = warmup_threshold(cfg.reservoir_capacity);
    if cfg.reservoir_capacity < warmup {
        log::warn!(
            "reservoir capacity {} is below the warm-up threshold {warmup}; no SGD steps will run",
            cfg.reservoir_capacity
        );
    }
    let mut velocity = Velocity::zeros(dim, cfg.train.bits);
    let mut step_cfg = cfg.train.clone();

    let mut states = Vec::with_capacity(policies.len());
    let mut tables: Vec<HashTable> = Vec::with_capacity(policies.len());
    for spec in policies {
        let tc = TriggerConfig {
            theta: match spec.policy {
                UpdatePolicy::Quality { theta } => theta,
                UpdatePolicy::Periodic => f64::NEG_INFINITY,
            },
            check_interval: spec.check_interval,
        };
        let (ts, table) =
            TriggerState::init(&mapping, Some(&reservoir), retrieval_set, &tc, &binning, &cfg.labeling)?;
        states.push(ts);
        tables.push(table);
    }

    let schedule = if cfg.checkpoints > 0 && !queries.is_empty() {
        Some(CheckpointSchedule::generate(n, cfg.checkpoints, seed)?)
    } else {
        None
    };

    let mut loss_trace = Vec::new();
    let mut update_logs: Vec<Vec<UpdateLogEntry>> = vec![Vec::new(); policies.len()];
    let mut checkpoint_metrics: Vec<Vec<(u64, f64)>> = vec![Vec::new(); policies.len()];
    // mAP is a function of (snapshot, table); recompute only when the
    // table version moved since the last checkpoint.
    let mut map_cache: Vec<Option<(u64, f64)>> = vec![None; policies.len()];

    for (idx, x) in stream_data.iter().enumerate() {
        let t = idx as u64 + 1;

        if reservoir.len() >= warmup {
            let part = partition(x, reservoir.items(), &cfg.labeling)?;
            if !part.is_degenerate() {
                let loss = sgd_step_at(&mut mapping, &part, &step_cfg, &mut velocity, t)?;
                loss_trace.push((t, loss));
            }
        }
        reservoir.observe(x.clone());

        if t < n {
            for (p, spec) in policies.iter().enumerate() {
                match spec.policy {
                    UpdatePolicy::Quality { .. } => {
                        let (table, entry) = states[p].maybe_trigger(
                            t,
                            &mapping,
                            &reservoir,
                            retrieval_set,
                            &binning,
                            &cfg.labeling,
                        )?;
                        if let Some(table) = table {
                            tables[p] = table;
                        }
                        if let Some(entry) = entry {
                            update_logs[p].push(entry);
                        }
                    }
                    UpdatePolicy::Periodic => {
                        if let Some(table) = states[p].baseline_trigger(&mapping, retrieval_set)? {
                            tables[p] = table;
                        }
                    }
                }
            }
        }

        if let Some(schedule) = &schedule {
            if schedule.contains(t) {
                for p in 0..policies.len() {
                    let version = tables[p].mapping_version();
                    let value = match map_cache[p] {
                        Some((v, m)) if v == version => m,
                        _ => {
                            let m = mean_ap(
                                queries,
                                states[p].snapshot(),
                                &tables[p],
                                retrieval_set,
                                &cfg.labeling,
                                cfg.map_cutoff,
                            )?;
                            map_cache[p] = Some((version, m));
                            m
                        }
                    };
                    checkpoint_metrics[p].push((t, value));
                }
            }
        }

        if cfg.train.decay_every > 0 && t % cfg.train.decay_every as u64 == 0 {
            step_cfg.learning_rate *= cfg.train.decay_factor;
        }
    }

    let mut outcomes = Vec::with_capacity(policies.len());
    for (p, spec) in policies.iter().enumerate() {
        let final_map = if queries.is_empty() {
            None
        } else {
            let version = tables[p].mapping_version();
            Some(match map_cache[p] {
                Some((v, m)) if v == version => m,
                _ => mean_ap(
                    queries,
                    states[p].snapshot(),
                    &tables[p],
                    retrieval_set,
                    &cfg.labeling,
                    cfg.map_cutoff,
                )?,
            })
        };
        outcomes.push(PolicyOutcome {
            spec: *spec,
            update_count: states[p].update_count(),
            update_log: std::mem::take(&mut update_logs[p]),
            checkpoint_metrics: std::mem::take(&mut checkpoint_metrics[p]),
            final_map,
        });
    }

    Ok(MultiPolicyReport {
        final_mapping: mapping,
        loss_trace,
        outcomes,
    })
}

/// Streaming training with the quality-gated update policy from
/// `cfg.trigger`. See `train_online_multi` for the mechanics.
pub fn train_online(
    stream_data: &[Example],
    retrieval_set: &[Example],
    queries: &[Example],
    cfg: &OnlineConfig,
) -> Result<TrainReport> {
    let spec = PolicySpec {
        policy: UpdatePolicy::Quality { theta: cfg.trigger.theta },
        check_interval: cfg.trigger.check_interval,
    };
    let mut report = train_online_multi(stream_data, retrieval_set, queries, cfg, &[spec])?;
    let outcome = report.outcomes.pop().expect("exactly one policy requested");
    Ok(TrainReport {
        final_mapping: report.final_mapping,
        loss_trace: report.loss_trace,
        checkpoint_metrics: outcome.checkpoint_metrics,
        update_log: outcome.update_log,
        update_count: outcome.update_count,
        final_map: outcome.final_map,
    })
}
