//! A short FCN_A run on a 20-utterance synthetic corpus.

use boneair::corpus::{build_manifest, CorpusConfig, SplitCounts};
use boneair::models::{build_fcn_a, initialized, train_model, InputSelector, TrainConfig};

#[test]
fn validation_mse_improves_over_thirty_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = CorpusConfig {
        seed: 4,
        counts: SplitCounts { train: 16, validation: 2, test: 2 },
        utterance_duration_s: 1.0,
        ..CorpusConfig::default()
    };
    let manifest = build_manifest(dir.path(), &corpus).unwrap();
    let cfg = TrainConfig {
        lr: 1e-3,
        batch_size: 1,
        max_epochs: 30,
        segment_length: 1024,
        seed: 4,
        patience: 30,
        steps_per_epoch: Some(1),
        val_segments: Some(4),
        ..TrainConfig::default()
    };
    let (_, h) = train_model(initialized(build_fcn_a(), 4), &manifest, InputSelector::NoisyAcm, &cfg).unwrap();
    assert_eq!(h.epochs.len(), 30);
    let last = h.epochs.last().unwrap().val_mse;
    assert!(last < h.initial_val_mse, "{} -> {last}", h.initial_val_mse);
}
