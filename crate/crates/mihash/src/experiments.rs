//! Experiment drivers: streaming trials with a periodic baseline,
//! parameter sweeps, batch training, and the mapping-quality
//! correlation study. Each driver runs `trials` seeded repetitions
//! (trial t uses base seed + t), in parallel, and writes metric CSVs
//! plus JSONL update logs into an output directory.
//!
//! Everything except wall-clock timestamps is deterministic: metric
//! CSVs are byte-identical across reruns of the same config, and
//! wall time appears only in the JSONL logs.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::eval::{auc_over_checkpoints, correlation_study, mean_ap, CorrelationStudy};
use crate::hashing::{rebuild_table, HashMapping};
use crate::io::{read_dataset, write_mapping, Dataset, LabelColumn};
use crate::learner::{
    init_mapping, train_batch, train_online_multi, PolicyOutcome, PolicySpec, UpdatePolicy,
};
use crate::mi::{estimate_histograms, BinningConfig, CodeKind};
use crate::seeds::{stream::SPLIT, sub_rng, trial_seed};
use crate::synth::gaussian_clusters;
use crate::trigger::UpdateLogEntry;
use crate::types::{Example, LabelingRule};

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt6).unwrap_or_default()
}

fn save(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Loads the configured dataset or synthesizes `n` Gaussian-cluster
/// examples from the config's synth fields.
pub fn load_or_synth(cfg: &ExperimentConfig, n: usize) -> Result<Dataset> {
    let data = match &cfg.data {
        Some(path) => read_dataset(path, LabelColumn::Infer)?,
        None => gaussian_clusters(n, cfg.dim, cfg.classes, cfg.spread, cfg.seed)?,
    };
    if data.len() < n {
        return Err(Error::Config(format!(
            "dataset has {} examples but the run needs {n}",
            data.len()
        )));
    }
    if matches!(cfg.labeling_rule()?, LabelingRule::Class) && !data.labeled() {
        return Err(Error::Config(
            "class labeling needs a labeled dataset".to_string(),
        ));
    }
    Ok(data)
}

/// Shuffles the dataset with the trial's split stream and carves off
/// `test_size` held-out queries; the remainder is the retrieval pool,
/// whose first `train_size` examples form the stream / training set.
fn trial_split(data: &Dataset, cfg: &ExperimentConfig, seed_t: u64) -> (Vec<Example>, Vec<Example>) {
    use rand::seq::SliceRandom;
    let mut shuffled = data.examples().to_vec();
    shuffled.shuffle(&mut sub_rng(seed_t, SPLIT));
    let rest = shuffled.split_off(cfg.test_size);
    (shuffled, rest)
}

/// Per-policy, per-trial result of a streaming run.
#[derive(Debug, Clone)]
pub struct PolicyTrialMetrics {
    /// Table builds, the initial one included.
    pub updates: u64,
    pub final_map: Option<f64>,
    /// Area under the checkpoint (position, mAP) curve; None when
    /// checkpoints are disabled.
    pub auc: Option<f64>,
    pub checkpoints: Vec<(u64, f64)>,
    pub update_log: Vec<UpdateLogEntry>,
}

fn policy_metrics(outcome: PolicyOutcome, stream_len: u64) -> Result<PolicyTrialMetrics> {
    let auc = if outcome.checkpoint_metrics.len() >= 2 {
        Some(auc_over_checkpoints(&outcome.checkpoint_metrics, stream_len)?)
    } else {
        None
    };
    Ok(PolicyTrialMetrics {
        updates: outcome.update_count,
        final_map: outcome.final_map,
        auc,
        checkpoints: outcome.checkpoint_metrics,
        update_log: outcome.update_log,
    })
}

/// One streaming trial: the quality-triggered policy and the periodic
/// baseline over the same learner trajectory.
#[derive(Debug, Clone)]
pub struct OnlineTrial {
    pub trial: usize,
    pub seed: u64,
    pub tu: PolicyTrialMetrics,
    pub baseline: PolicyTrialMetrics,
}

#[derive(Debug, Clone)]
pub struct OnlineSummary {
    pub mean_tu_updates: f64,
    pub mean_baseline_updates: f64,
    /// Trial-averaged baseline/TU update ratio.
    pub reduction: f64,
    pub mean_tu_auc: Option<f64>,
    pub mean_baseline_auc: Option<f64>,
    /// Mean TU AUC minus mean baseline AUC.
    pub delta_auc: Option<f64>,
    pub mean_tu_final_map: Option<f64>,
    pub mean_baseline_final_map: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct OnlineReport {
    pub trials: Vec<OnlineTrial>,
    pub summary: OnlineSummary,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_opt(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = xs.collect();
    v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs one streaming trial with the given policies, sharing the
/// learner trajectory across all of them.
fn online_trial(
    data: &Dataset,
    cfg: &ExperimentConfig,
    trial: usize,
    policies: &[PolicySpec],
) -> Result<Vec<PolicyTrialMetrics>> {
    let seed_t = trial_seed(cfg.seed, trial);
    let (test, rest) = trial_split(data, cfg, seed_t);
    if rest.len() < cfg.train_size {
        return Err(Error::Config(format!(
            "retrieval pool has {} examples, stream needs {}",
            rest.len(),
            cfg.train_size
        )));
    }
    let stream = &rest[..cfg.train_size];
    let mut online_cfg = cfg.to_online_config()?;
    online_cfg.train.seed = seed_t;
    let report = train_online_multi(stream, &rest, &test, &online_cfg, policies)?;
    report
        .outcomes
        .into_iter()
        .map(|o| policy_metrics(o, cfg.train_size as u64))
        .collect()
}

/// Streaming experiment: quality-triggered updates against the
/// periodic baseline, `trials` seeded repetitions in parallel.
///
/// Writes `online_trials.csv`, `online_summary.csv`,
/// `checkpoint_map.csv`, and one `update_log_trial{t}.jsonl` per
/// trial (the baseline rebuilds unconditionally and logs nothing).
pub fn run_online(cfg: &ExperimentConfig, out_dir: &Path) -> Result<OnlineReport> {
    cfg.validate()?;
    let data = load_or_synth(cfg, cfg.test_size + cfg.train_size)?;
    let policies = [
        PolicySpec {
            policy: UpdatePolicy::Quality { theta: cfg.theta },
            check_interval: cfg.update_interval,
        },
        PolicySpec { policy: UpdatePolicy::Periodic, check_interval: cfg.update_interval },
    ];

    let trials: Vec<OnlineTrial> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<OnlineTrial> {
            let mut metrics = online_trial(&data, cfg, t, &policies)?;
            let baseline = metrics.pop().expect("two policies");
            let tu = metrics.pop().expect("two policies");
            Ok(OnlineTrial { trial: t, seed: trial_seed(cfg.seed, t), tu, baseline })
        })
        .collect::<Result<_>>()?;

    let summary = OnlineSummary {
        mean_tu_updates: mean(trials.iter().map(|t| t.tu.updates as f64)),
        mean_baseline_updates: mean(trials.iter().map(|t| t.baseline.updates as f64)),
        reduction: mean(
            trials.iter().map(|t| t.baseline.updates as f64 / t.tu.updates as f64),
        ),
        mean_tu_auc: mean_opt(trials.iter().map(|t| t.tu.auc)),
        mean_baseline_auc: mean_opt(trials.iter().map(|t| t.baseline.auc)),
        delta_auc: mean_opt(trials.iter().map(|t| t.tu.auc))
            .zip(mean_opt(trials.iter().map(|t| t.baseline.auc)))
            .map(|(a, b)| a - b),
        mean_tu_final_map: mean_opt(trials.iter().map(|t| t.tu.final_map)),
        mean_baseline_final_map: mean_opt(trials.iter().map(|t| t.baseline.final_map)),
    };

    ensure_dir(out_dir)?;
    let mut rows = String::from("trial,seed,policy,updates,final_map,auc\n");
    for t in &trials {
        for (name, m) in [("tu", &t.tu), ("baseline", &t.baseline)] {
            rows.push_str(&format!(
                "{},{},{},{},{},{}\n",
                t.trial,
                t.seed,
                name,
                m.updates,
                fmt_opt(m.final_map),
                fmt_opt(m.auc),
            ));
        }
    }
    save(&out_dir.join("online_trials.csv"), &rows)?;

    let s = &summary;
    save(
        &out_dir.join("online_summary.csv"),
        &format!(
            "mean_tu_updates,mean_baseline_updates,reduction,mean_tu_auc,mean_baseline_auc,delta_auc,mean_tu_final_map,mean_baseline_final_map\n{},{},{},{},{},{},{},{}\n",
            fmt6(s.mean_tu_updates),
            fmt6(s.mean_baseline_updates),
            fmt6(s.reduction),
            fmt_opt(s.mean_tu_auc),
            fmt_opt(s.mean_baseline_auc),
            fmt_opt(s.delta_auc),
            fmt_opt(s.mean_tu_final_map),
            fmt_opt(s.mean_baseline_final_map),
        ),
    )?;

    let mut curve = String::from("trial,policy,position,map\n");
    for t in &trials {
        for (name, m) in [("tu", &t.tu), ("baseline", &t.baseline)] {
            for &(pos, map) in &m.checkpoints {
                curve.push_str(&format!("{},{},{},{}\n", t.trial, name, pos, fmt6(map)));
            }
        }
    }
    save(&out_dir.join("checkpoint_map.csv"), &curve)?;

    for t in &trials {
        let mut log = String::new();
        for entry in &t.tu.update_log {
            log.push_str(&serde_json::to_string(entry).expect("log entries serialize"));
            log.push('\n');
        }
        save(&out_dir.join(format!("update_log_trial{}.jsonl", t.trial)), &log)?;
    }

    Ok(OnlineReport { trials, summary })
}

/// Which trigger parameter a sweep varies.
#[derive(Debug, Clone)]
pub enum SweepParam {
    /// Quality margins; the check interval stays at the config value.
    Theta(Vec<f64>),
    /// Check intervals; θ stays at the config value.
    Interval(Vec<u64>),
}

/// One sweep row: the swept value with trial-averaged metrics and the
/// per-trial counts backing them.
#[derive(Debug, Clone)]
pub struct SweepRow {
    /// The θ value, or the interval as f64.
    pub value: f64,
    pub per_trial_updates: Vec<u64>,
    pub per_trial_baseline_updates: Vec<u64>,
    pub mean_updates: f64,
    pub mean_baseline_updates: f64,
    /// Trial-averaged baseline/TU update ratio at this value.
    pub reduction: f64,
    pub mean_auc: Option<f64>,
    pub mean_baseline_auc: Option<f64>,
    pub delta_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

/// Sweeps θ or the check interval over the criterion run. All swept
/// policies share each trial's learner trajectory, which is exactly
/// equivalent to independent same-seed runs. Writes `sweep_theta.csv`
/// or `sweep_interval.csv` with one row per value.
pub fn sweep(cfg: &ExperimentConfig, param: &SweepParam, out_dir: &Path) -> Result<SweepReport> {
    cfg.validate()?;
    let data = load_or_synth(cfg, cfg.test_size + cfg.train_size)?;

    // Pair every swept policy with the baseline it is compared to;
    // for θ sweeps a single baseline at the shared interval serves
    // all rows, for interval sweeps each interval gets its own.
    let (policies, pairing): (Vec<PolicySpec>, Vec<(usize, usize)>) = match param {
        SweepParam::Theta(values) => {
            if values.is_empty() {
                return Err(Error::Config("theta sweep needs at least one value".to_string()));
            }
            let mut p: Vec<PolicySpec> = values
                .iter()
                .map(|&theta| PolicySpec {
                    policy: UpdatePolicy::Quality { theta },
                    check_interval: cfg.update_interval,
                })
                .collect();
            p.push(PolicySpec {
                policy: UpdatePolicy::Periodic,
                check_interval: cfg.update_interval,
            });
            let base = values.len();
            (p, (0..base).map(|i| (i, base)).collect())
        }
        SweepParam::Interval(values) => {
            if values.is_empty() {
                return Err(Error::Config(
                    "interval sweep needs at least one value".to_string(),
                ));
            }
            let mut p = Vec::with_capacity(values.len() * 2);
            for &u in values {
                p.push(PolicySpec {
                    policy: UpdatePolicy::Quality { theta: cfg.theta },
                    check_interval: u,
                });
                p.push(PolicySpec { policy: UpdatePolicy::Periodic, check_interval: u });
            }
            (p, (0..values.len()).map(|i| (2 * i, 2 * i + 1)).collect())
        }
    };

    let per_trial: Vec<Vec<PolicyTrialMetrics>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| online_trial(&data, cfg, t, &policies))
        .collect::<Result<_>>()?;

    let values: Vec<f64> = match param {
        SweepParam::Theta(v) => v.clone(),
        SweepParam::Interval(v) => v.iter().map(|&u| u as f64).collect(),
    };

    let rows: Vec<SweepRow> = values
        .iter()
        .zip(&pairing)
        .map(|(&value, &(qi, bi))| {
            let q: Vec<&PolicyTrialMetrics> = per_trial.iter().map(|m| &m[qi]).collect();
            let b: Vec<&PolicyTrialMetrics> = per_trial.iter().map(|m| &m[bi]).collect();
            let mean_auc = mean_opt(q.iter().map(|m| m.auc));
            let mean_baseline_auc = mean_opt(b.iter().map(|m| m.auc));
            SweepRow {
                value,
                per_trial_updates: q.iter().map(|m| m.updates).collect(),
                per_trial_baseline_updates: b.iter().map(|m| m.updates).collect(),
                mean_updates: mean(q.iter().map(|m| m.updates as f64)),
                mean_baseline_updates: mean(b.iter().map(|m| m.updates as f64)),
                reduction: mean(
                    q.iter()
                        .zip(&b)
                        .map(|(qm, bm)| bm.updates as f64 / qm.updates as f64),
                ),
                mean_auc,
                mean_baseline_auc,
                delta_auc: mean_auc.zip(mean_baseline_auc).map(|(a, b)| a - b),
            }
        })
        .collect();

    let (file, param_name) = match param {
        SweepParam::Theta(_) => ("sweep_theta.csv", "theta"),
        SweepParam::Interval(_) => ("sweep_interval.csv", "interval"),
    };
    ensure_dir(out_dir)?;
    let mut csv = String::from(
        "param,value,mean_updates,mean_baseline_updates,reduction,mean_auc,mean_baseline_auc,delta_auc\n",
    );
    for r in &rows {
        let value = match param {
            SweepParam::Theta(_) => fmt6(r.value),
            SweepParam::Interval(_) => format!("{}", r.value as u64),
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            param_name,
            value,
            fmt6(r.mean_updates),
            fmt6(r.mean_baseline_updates),
            fmt6(r.reduction),
            fmt_opt(r.mean_auc),
            fmt_opt(r.mean_baseline_auc),
            fmt_opt(r.delta_auc),
        ));
    }
    save(&out_dir.join(file), &csv)?;

    Ok(SweepReport { rows })
}

/// Mean over non-degenerate anchors of the conditional-histogram
/// overlap sum_k min(p+_k, p-_k) on binary-code distances. 1 means
/// neighbor and non-neighbor distances are indistinguishable, 0 means
/// perfectly separated.
pub fn mean_overlap(
    items: &[Example],
    mapping: &HashMapping,
    binning: &BinningConfig,
    labeling: &LabelingRule,
) -> Result<f64> {
    if items.len() < 2 {
        return Err(Error::domain("overlap needs at least two examples".to_string()));
    }
    let overlaps: Vec<f64> = items
        .par_iter()
        .map(|anchor| -> Result<Option<f64>> {
            let part = crate::types::partition(anchor, items, labeling)?;
            if part.is_degenerate() {
                return Ok(None);
            }
            let h = estimate_histograms(&part, mapping, binning, CodeKind::Binary)?;
            Ok(Some(h.overlap()))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    if overlaps.is_empty() {
        return Err(Error::domain(
            "every anchor was degenerate; overlap is undefined".to_string(),
        ));
    }
    Ok(overlaps.iter().sum::<f64>() / overlaps.len() as f64)
}

/// One batch-training trial with its end-state metrics on held-out
/// data: mAP and neighbor/non-neighbor overlap, each for the initial
/// random mapping and the trained one.
#[derive(Debug, Clone)]
pub struct BatchTrial {
    pub trial: usize,
    pub seed: u64,
    /// Mean minibatch loss of the last recorded step.
    pub final_loss: Option<f64>,
    pub map_init: f64,
    pub map_trained: f64,
    pub overlap_init: f64,
    pub overlap_trained: f64,
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    pub trials: Vec<BatchTrial>,
    pub mean_map_init: f64,
    pub mean_map_trained: f64,
    pub mean_overlap_init: f64,
    pub mean_overlap_trained: f64,
}

/// Batch experiment: trains on each trial's training split, scores
/// mAP of held-out queries against the training pool and the overlap
/// on the held-out set, before and after training. Writes
/// `batch_trials.csv`, `batch_summary.csv`, and one
/// `mapping_trial{t}.mhsh` per trial.
pub fn run_batch(cfg: &ExperimentConfig, out_dir: &Path) -> Result<BatchReport> {
    cfg.validate()?;
    let data = load_or_synth(cfg, cfg.test_size + cfg.train_size)?;
    let labeling = cfg.labeling_rule()?;
    let binning = BinningConfig::for_bits(cfg.bits)?;

    let trials: Vec<(BatchTrial, HashMapping)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<(BatchTrial, HashMapping)> {
            let seed_t = trial_seed(cfg.seed, t);
            let (test, rest) = trial_split(&data, cfg, seed_t);
            let train = &rest[..cfg.train_size];
            let mut train_cfg = cfg.to_train_config();
            train_cfg.mode = crate::learner::TrainMode::Batch;
            train_cfg.seed = seed_t;

            let init = init_mapping(data.dim(), &train_cfg, seed_t)?;
            let report = train_batch(train, &train_cfg)?;
            let trained = report.final_mapping;

            let table_init = rebuild_table(&init, train, 1)?;
            let table_trained = rebuild_table(&trained, train, 2)?;
            let map_init = mean_ap(&test, &init, &table_init, train, &labeling, cfg.cutoff())?;
            let map_trained =
                mean_ap(&test, &trained, &table_trained, train, &labeling, cfg.cutoff())?;
            let overlap_init = mean_overlap(&test, &init, &binning, &labeling)?;
            let overlap_trained = mean_overlap(&test, &trained, &binning, &labeling)?;

            Ok((
                BatchTrial {
                    trial: t,
                    seed: seed_t,
                    final_loss: report.loss_trace.last().map(|&(_, l)| l),
                    map_init,
                    map_trained,
                    overlap_init,
                    overlap_trained,
                },
                trained,
            ))
        })
        .collect::<Result<_>>()?;

    ensure_dir(out_dir)?;
    let mut rows =
        String::from("trial,seed,final_loss,map_init,map_trained,overlap_init,overlap_trained\n");
    for (t, mapping) in &trials {
        rows.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            t.trial,
            t.seed,
            fmt_opt(t.final_loss),
            fmt6(t.map_init),
            fmt6(t.map_trained),
            fmt6(t.overlap_init),
            fmt6(t.overlap_trained),
        ));
        write_mapping(out_dir.join(format!("mapping_trial{}.mhsh", t.trial)), mapping)?;
    }
    save(&out_dir.join("batch_trials.csv"), &rows)?;

    let trials: Vec<BatchTrial> = trials.into_iter().map(|(t, _)| t).collect();
    let report = BatchReport {
        mean_map_init: mean(trials.iter().map(|t| t.map_init)),
        mean_map_trained: mean(trials.iter().map(|t| t.map_trained)),
        mean_overlap_init: mean(trials.iter().map(|t| t.overlap_init)),
        mean_overlap_trained: mean(trials.iter().map(|t| t.overlap_trained)),
        trials,
    };
    save(
        &out_dir.join("batch_summary.csv"),
        &format!(
            "mean_map_init,mean_map_trained,mean_overlap_init,mean_overlap_trained\n{},{},{},{}\n",
            fmt6(report.mean_map_init),
            fmt6(report.mean_map_trained),
            fmt6(report.mean_overlap_init),
            fmt6(report.mean_overlap_trained),
        ),
    )?;
    Ok(report)
}

/// Correlation study between per-mapping MI and ranking metrics over
/// random mappings. The pool comes from the configured dataset or a
/// fresh `train_size`-point synthesis. Writes `correlation.csv` (one
/// row per mapping) and `correlation_summary.csv` (the Pearson
/// coefficients).
pub fn run_correlation(cfg: &ExperimentConfig, out_dir: &Path) -> Result<CorrelationStudy> {
    cfg.validate()?;
    let data = load_or_synth(cfg, cfg.train_size)?;
    let labeling = cfg.labeling_rule()?;
    let study = correlation_study(
        data.examples(),
        cfg.n_mappings,
        cfg.bits,
        cfg.n_queries,
        &labeling,
        cfg.seed,
    )?;

    ensure_dir(out_dir)?;
    let mut rows = String::from("mapping_index,mi,ap,dcg,ndcg\n");
    for r in &study.rows {
        rows.push_str(&format!(
            "{},{},{},{},{}\n",
            r.mapping_index,
            fmt6(r.mi),
            fmt6(r.ap),
            fmt6(r.dcg),
            fmt6(r.ndcg),
        ));
    }
    save(&out_dir.join("correlation.csv"), &rows)?;
    save(
        &out_dir.join("correlation_summary.csv"),
        &format!(
            "pearson_mi_ap,pearson_mi_dcg,pearson_mi_ndcg\n{},{},{}\n",
            fmt_opt(study.pearson_mi_ap),
            fmt_opt(study.pearson_mi_dcg),
            fmt_opt(study.pearson_mi_ndcg),
        ),
    )?;
    Ok(study)
}

/// Result of scoring a stored mapping on a dataset.
#[derive(Debug, Clone, Copy)]
pub struct EvalReport {
    pub map: f64,
    pub queries: usize,
    pub items: usize,
}

/// Scores a mapping: every example queries the table over the full
/// dataset (itself excluded). Writes `eval.csv`.
pub fn eval_mapping(
    cfg: &ExperimentConfig,
    mapping: &HashMapping,
    out_dir: &Path,
) -> Result<EvalReport> {
    cfg.validate()?;
    let data = load_or_synth(cfg, cfg.train_size)?;
    let labeling = cfg.labeling_rule()?;
    let items = data.examples();
    let table = rebuild_table(mapping, items, 1)?;
    let map = mean_ap(items, mapping, &table, items, &labeling, cfg.cutoff())?;
    let report = EvalReport { map, queries: items.len(), items: items.len() };
    ensure_dir(out_dir)?;
    save(
        &out_dir.join("eval.csv"),
        &format!("map,queries,items\n{},{},{}\n", fmt6(map), report.queries, report.items),
    )?;
    Ok(report)
}
