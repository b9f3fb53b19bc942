//! End-to-end pipeline checks that cross module boundaries: synth
//! data through training to ranking metrics.

use mihash::experiments::run_batch;
use mihash::{ExperimentConfig, TrainMode};
use tempfile::tempdir;

/// Cluster centers sit on unit basis vectors, so noise comparable to
/// the inter-center distance (sqrt 2) buries the class structure.
/// Trained retrieval quality must degrade monotonically as the noise
/// grows through that scale.
#[test]
fn trained_map_degrades_with_cluster_spread() {
    let mut maps = Vec::new();
    for &spread in &[0.3, 0.8, 1.5] {
        let mut cfg = ExperimentConfig::default();
        cfg.mode = TrainMode::Batch;
        cfg.dim = 8;
        cfg.classes = 3;
        cfg.spread = spread;
        cfg.test_size = 60;
        cfg.train_size = 800;
        cfg.bits = 8;
        cfg.learning_rate = 0.05;
        cfg.sharpness = 3.0;
        cfg.minibatch_size = 200;
        cfg.epochs = 10;
        cfg.decay_every = 2;
        cfg.seed = 7;
        cfg.trials = 1;

        let dir = tempdir().unwrap();
        let report = run_batch(&cfg, dir.path()).unwrap();
        maps.push(report.trials[0].map_trained);
    }
    assert!(
        maps[0] > maps[1] && maps[1] > maps[2],
        "trained map should fall as spread grows: {maps:?}"
    );
    assert!(maps[0] > 0.9, "tight clusters should rank well: {maps:?}");
}
