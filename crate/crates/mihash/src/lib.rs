//! Online learned hashing with a mutual-information objective.
//!
//! The crate trains linear hash mappings whose binary codes separate
//! each example's neighbors from its non-neighbors in Hamming
//! distance, measured as the mutual information between "is a
//! neighbor" and the code distance. Training works from a stream: a
//! reservoir sample stands in for the data seen so far, SGD steps
//! maximize a differentiable relaxation of the MI objective, and a
//! quality-gated trigger policy decides when the published hash table
//! is worth recomputing.
//!
//! Module map:
//! - [`types`]: examples, labeling rules, neighbor partitions.
//! - [`hashing`]: linear mappings, binary/relaxed codes, hash tables.
//! - [`mi`]: differentiable distance histograms and the MI objective.
//! - [`reservoir`]: reservoir sampling and snapshot quality scoring.
//! - [`trigger`]: quality-gated and periodic table-update policies.
//! - [`learner`]: SGD steps plus the batch and streaming loops.
//! - [`eval`]: retrieval metrics, checkpoint schedules, correlation
//!   studies.
//! - [`seeds`]: named deterministic RNG sub-streams.
//! - [`io`]: dataset and mapping files (MIHF, MHSH, CSV).
//! - [`synth`]: synthetic Gaussian-cluster datasets.
//! - [`config`]: TOML experiment configuration.
//! - [`experiments`]: trial runners, sweeps, and report emission.

pub mod config;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod hashing;
pub mod io;
pub mod learner;
pub mod mi;
pub mod reservoir;
pub mod seeds;
pub mod synth;
pub mod trigger;
pub mod types;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use hashing::{hamming, relaxed_distance, BinaryCode, HashMapping, HashTable, MAX_BITS};
pub use io::Dataset;
pub use learner::{
    init_mapping, sgd_step, train_batch, train_online, train_online_multi, OnlineConfig,
    TrainConfig, TrainMode, TrainReport, Velocity,
};
pub use mi::{mutual_information, BinningConfig, CodeKind, HistogramPair};
pub use reservoir::Reservoir;
pub use synth::gaussian_clusters;
pub use trigger::{Decision, TriggerConfig, TriggerState, UpdateLogEntry};
pub use types::{Example, LabelingRule, NeighborPartition};
