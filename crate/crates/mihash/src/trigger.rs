//! Trigger policy for hash table recomputation.
//!
//! Re-encoding the retrieval set after every learning step is wasted
//! work when the mapping has not meaningfully improved. The trigger
//! checks every `check_interval` stream examples: it scores the
//! candidate mapping on the reservoir and rebuilds the table only when
//! that score beats the stored snapshot's score by more than `theta`.
//! A candidate numerically identical to the snapshot (Frobenius
//! distance below [`NORM_SKIP_TOL`]) never triggers a rebuild.
//!
//! `theta = -inf` degenerates to the fixed-interval baseline schedule
//! and `theta = +inf` freezes the initial table, so one knob spans the
//! whole policy family. The fixed-interval baseline itself is
//! [`TriggerState::baseline_trigger`], which skips the scoring
//! entirely.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::{rebuild_table, HashMapping, HashTable};
use crate::mi::BinningConfig;
use crate::reservoir::Reservoir;
use crate::types::{Example, LabelingRule};

/// Candidates closer than this to the snapshot (Frobenius norm over
/// the weights) never trigger an update.
pub const NORM_SKIP_TOL: f64 = 1e-6;

/// Trigger policy knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerConfig {
    /// Required quality improvement; may be -inf or +inf, not NaN.
    pub theta: f64,
    /// Stream examples between checks.
    pub check_interval: u64,
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.theta.is_nan() {
            return Err(Error::Config("theta must not be NaN".to_string()));
        }
        if self.check_interval == 0 {
            return Err(Error::Config("check interval must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// Outcome of one trigger check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Updated,
    Skipped,
}

/// One JSON-lines record per quality check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpdateLogEntry {
    pub stream_position: u64,
    pub q_candidate: f64,
    pub q_snapshot: f64,
    pub decision: Decision,
    /// Check duration in seconds. Not part of any deterministic output.
    pub wall_time: f64,
}

/// Mutable trigger state: the snapshot mapping backing the live table,
/// its reservoir quality, and the check bookkeeping.
#[derive(Debug, Clone)]
pub struct TriggerState {
    snapshot: HashMapping,
    snapshot_quality: f64,
    theta: f64,
    check_interval: u64,
    examples_since_check: u64,
    update_count: u64,
    version: u64,
}

impl TriggerState {
    /// Builds the initial table from `mapping` and adopts it as the
    /// first snapshot. When the reservoir already holds at least two
    /// items the snapshot is scored on it; otherwise the stored
    /// quality starts at 0.
    pub fn init(
        mapping: &HashMapping,
        reservoir: Option<&Reservoir>,
        retrieval_set: &[Example],
        cfg: &TriggerConfig,
        binning: &BinningConfig,
        labeling: &LabelingRule,
    ) -> Result<(Self, HashTable)> {
        cfg.validate()?;
        let snapshot_quality = match reservoir {
            Some(r) if r.len() >= 2 => r.quality(mapping, binning, labeling)?,
            _ => 0.0,
        };
        let table = rebuild_table(mapping, retrieval_set, 1)?;
        Ok((
            TriggerState {
                snapshot: mapping.clone(),
                snapshot_quality,
                theta: cfg.theta,
                check_interval: cfg.check_interval,
                examples_since_check: 0,
                update_count: 1,
                version: 1,
            },
            table,
        ))
    }

    pub fn snapshot(&self) -> &HashMapping {
        &self.snapshot
    }

    pub fn snapshot_quality(&self) -> f64 {
        self.snapshot_quality
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn check_interval(&self) -> u64 {
        self.check_interval
    }

    pub fn examples_since_check(&self) -> u64 {
        self.examples_since_check
    }

    /// Total table builds, the initial one included.
    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Advances the policy by one processed stream example. On every
    /// `check_interval`-th call it scores `current` on the reservoir
    /// and rebuilds the table when the score beats the snapshot's by
    /// more than theta (and the mapping actually moved). Returns the
    /// new table when one was built, plus a log entry for every check.
    ///
    /// With fewer than two reservoir items the check is logged as
    /// skipped with the snapshot's own quality as the candidate score.
    pub fn maybe_trigger(
        &mut self,
        stream_position: u64,
        current: &HashMapping,
        reservoir: &Reservoir,
        retrieval_set: &[Example],
        binning: &BinningConfig,
        labeling: &LabelingRule,
    ) -> Result<(Option<HashTable>, Option<UpdateLogEntry>)> {
        self.examples_since_check += 1;
        if self.examples_since_check < self.check_interval {
            return Ok((None, None));
        }
        self.examples_since_check = 0;

        let started = Instant::now();
        let moved = current.frobenius_distance(&self.snapshot)? >= NORM_SKIP_TOL;
        let q_snapshot = self.snapshot_quality;
        let (q_candidate, update) = if reservoir.len() < 2 {
            (q_snapshot, false)
        } else {
            let q = reservoir.quality(current, binning, labeling)?;
            (q, q - q_snapshot > self.theta && moved)
        };

        let table = if update {
            self.snapshot = current.clone();
            self.snapshot_quality = q_candidate;
            self.version += 1;
            self.update_count += 1;
            Some(rebuild_table(current, retrieval_set, self.version)?)
        } else {
            None
        };
        let entry = UpdateLogEntry {
            stream_position,
            q_candidate,
            q_snapshot,
            decision: if update { Decision::Updated } else { Decision::Skipped },
            wall_time: started.elapsed().as_secs_f64(),
        };
        Ok((table, Some(entry)))
    }

    /// Fixed-interval baseline: rebuilds unconditionally at every
    /// check, subject only to the mapping-moved rule. No scoring, no
    /// log.
    pub fn baseline_trigger(
        &mut self,
        current: &HashMapping,
        retrieval_set: &[Example],
    ) -> Result<Option<HashTable>> {
        self.examples_since_check += 1;
        if self.examples_since_check < self.check_interval {
            return Ok(None);
        }
        self.examples_since_check = 0;
        if current.frobenius_distance(&self.snapshot)? < NORM_SKIP_TOL {
            return Ok(None);
        }
        self.snapshot = current.clone();
        self.version += 1;
        self.update_count += 1;
        Ok(Some(rebuild_table(current, retrieval_set, self.version)?))
    }
}
