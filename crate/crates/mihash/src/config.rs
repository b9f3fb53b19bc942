//! Experiment configuration: a TOML file of key-value pairs, every
//! key optional with a documented default, unknown keys rejected.
//! CLI flags override file values; the output directory additionally
//! honors the `MIHASH_OUT_DIR` environment variable.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{OnlineConfig, TrainConfig, TrainMode};
use crate::trigger::TriggerConfig;
use crate::types::LabelingRule;

/// Environment variable that overrides `out_dir` (but not an explicit
/// CLI flag).
pub const OUT_DIR_ENV: &str = "MIHASH_OUT_DIR";

/// One experiment's full parameterization. Field defaults are the
/// values used when the key is absent from the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Trainer the generic entry points dispatch to; the
    /// `train-online` / `train-batch` subcommands override it.
    pub mode: TrainMode,
    /// Dataset path (`.mihf` or CSV); when absent, experiments
    /// synthesize Gaussian-cluster data from the fields below.
    pub data: Option<PathBuf>,
    /// Synthetic data dimensionality.
    pub dim: usize,
    /// Synthetic cluster count; also the label alphabet.
    pub classes: usize,
    /// Synthetic per-cluster standard deviation.
    pub spread: f64,
    /// Held-out query count per trial.
    pub test_size: usize,
    /// Stream length (online) or training-set size (batch). The
    /// correlation study uses it as its pool size.
    pub train_size: usize,
    /// Code width in bits.
    pub bits: usize,
    /// Sigmoid sharpness of the relaxed codes.
    pub sharpness: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Learning-rate multiplier applied every `decay_every` units.
    pub decay_factor: f64,
    /// Decay cadence: examples online, epochs in batch; 0 disables.
    pub decay_every: usize,
    /// Batch mode only.
    pub minibatch_size: usize,
    /// Batch mode only.
    pub epochs: usize,
    pub reservoir_capacity: usize,
    /// Quality margin a candidate mapping must clear to trigger a
    /// table rebuild. `inf` freezes the table, `-inf` rebuilds at
    /// every check.
    pub theta: f64,
    /// Stream examples between trigger checks.
    pub update_interval: u64,
    /// Base seed; trial t runs with seed + t.
    pub seed: u64,
    pub trials: usize,
    /// Evaluation checkpoints per trial: 0 disables them, otherwise
    /// at least 2 so curves have an area.
    pub checkpoints: usize,
    /// Ground-truth rule: `class` or `percentile:<p>` with p in (0,1).
    pub labeling: String,
    /// Ranking cutoff for mAP; 0 ranks the full table.
    pub map_cutoff: usize,
    /// Where reports are written.
    pub out_dir: PathBuf,
    /// Correlation study: number of random mappings.
    pub n_mappings: usize,
    /// Correlation study: number of queries.
    pub n_queries: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: TrainMode::Online,
            data: None,
            dim: 16,
            classes: 3,
            spread: 0.3,
            test_size: 200,
            train_size: 2000,
            bits: 16,
            sharpness: 10.0,
            learning_rate: 0.1,
            momentum: 0.9,
            decay_factor: 0.5,
            decay_every: 0,
            minibatch_size: 250,
            epochs: 30,
            reservoir_capacity: 1000,
            theta: 0.0,
            update_interval: 100,
            seed: 42,
            trials: 3,
            checkpoints: 50,
            labeling: "class".to_string(),
            map_cutoff: 0,
            out_dir: PathBuf::from("out"),
            n_mappings: 50,
            n_queries: 100,
        }
    }
}

impl ExperimentConfig {
    /// Parses a TOML config file. Unknown keys are errors.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.to_train_config().validate()?;
        self.labeling_rule()?;
        TriggerConfig { theta: self.theta, check_interval: self.update_interval }.validate()?;
        if self.test_size == 0 {
            return Err(Error::Config("test_size must be positive".to_string()));
        }
        if self.train_size == 0 {
            return Err(Error::Config("train_size must be positive".to_string()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".to_string()));
        }
        if self.reservoir_capacity == 0 {
            return Err(Error::Config("reservoir_capacity must be positive".to_string()));
        }
        if self.checkpoints == 1 {
            return Err(Error::Config(
                "checkpoints must be 0 (disabled) or at least 2".to_string(),
            ));
        }
        if self.checkpoints > self.train_size {
            return Err(Error::Config(format!(
                "checkpoints ({}) cannot exceed train_size ({})",
                self.checkpoints, self.train_size
            )));
        }
        if self.data.is_none() {
            if self.dim == 0 {
                return Err(Error::Config("dim must be positive".to_string()));
            }
            if self.classes == 0 {
                return Err(Error::Config("classes must be positive".to_string()));
            }
            if !self.spread.is_finite() || self.spread < 0.0 {
                return Err(Error::Config(format!(
                    "spread must be finite and >= 0, got {}",
                    self.spread
                )));
            }
        }
        if self.n_mappings == 0 {
            return Err(Error::Config("n_mappings must be positive".to_string()));
        }
        if self.n_queries == 0 {
            return Err(Error::Config("n_queries must be positive".to_string()));
        }
        Ok(())
    }

    /// The labeling rule named by the `labeling` key.
    pub fn labeling_rule(&self) -> Result<LabelingRule> {
        let s = self.labeling.trim();
        if s.eq_ignore_ascii_case("class") {
            return Ok(LabelingRule::Class);
        }
        if let Some(p) = s.strip_prefix("percentile:") {
            let p: f64 = p.trim().parse().map_err(|_| {
                Error::Config(format!("labeling percentile is not a number: {s:?}"))
            })?;
            let rule = LabelingRule::DistancePercentile(p);
            rule.validate()?;
            return Ok(rule);
        }
        Err(Error::Config(format!(
            "labeling must be \"class\" or \"percentile:<p>\", got {s:?}"
        )))
    }

    pub fn cutoff(&self) -> Option<usize> {
        (self.map_cutoff > 0).then_some(self.map_cutoff)
    }

    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            mode: self.mode,
            bits: self.bits,
            sharpness: self.sharpness,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            decay_factor: self.decay_factor,
            decay_every: self.decay_every,
            minibatch_size: self.minibatch_size,
            epochs: self.epochs,
            seed: self.seed,
        }
    }

    pub fn to_online_config(&self) -> Result<OnlineConfig> {
        let mut train = self.to_train_config();
        train.mode = TrainMode::Online;
        Ok(OnlineConfig {
            train,
            trigger: TriggerConfig {
                theta: self.theta,
                check_interval: self.update_interval,
            },
            reservoir_capacity: self.reservoir_capacity,
            labeling: self.labeling_rule()?,
            checkpoints: self.checkpoints,
            map_cutoff: self.cutoff(),
        })
    }

    /// Output directory with precedence: explicit flag, then the
    /// `MIHASH_OUT_DIR` environment variable, then the config value.
    pub fn resolve_out_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_DIR_ENV) {
            if !p.is_empty() {
                return PathBuf::from(p);
            }
        }
        self.out_dir.clone()
    }
}
