use std::fs;

use conceptnorm::checkpoint::{
    encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint, CheckpointError,
};
use conceptnorm::config::TrainConfig;
use conceptnorm::corpus::{
    generate_synthetic, load_dataset, save_dataset, CorpusError, NoiseParams,
};
use conceptnorm::preprocess::Preprocessor;
use conceptnorm::trainer::{toy_encoder, train};

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let mut ds = generate_synthetic(15, 300, NoiseParams::level(0.3), 4).unwrap();
    ds.preprocess(&Preprocessor::default());
    let cfg = TrainConfig {
        dim: 12,
        max_epochs: 10,
        ..TrainConfig::default()
    };
    let records = &ds.folds.folds[0].train;
    let (model, _) = train(
        records,
        &cfg,
        toy_encoder(records, &cfg).unwrap(),
        &ds.inventory,
    )
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let loaded = load_checkpoint_for(&path, &ds.inventory).unwrap();
    assert_eq!(loaded, model);

    let mentions: Vec<_> = ds.folds.records().take(50).collect();
    assert_eq!(mentions.len(), 50);
    for r in mentions {
        let (a, qa) = model.predict(r.text()).unwrap();
        let (b, qb) = loaded.predict(r.text()).unwrap();
        assert_eq!(a, b);
        let bits = |q: &[f64]| q.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&qa.0), bits(&qb.0));
    }
    assert_eq!(
        encode_checkpoint(&loaded).unwrap(),
        fs::read(&path).unwrap()
    );
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let ds = generate_synthetic(4, 20, NoiseParams::none(), 0).unwrap();
    let cfg = TrainConfig {
        dim: 4,
        max_epochs: 2,
        ..TrainConfig::default()
    };
    let records = &ds.folds.folds[0].train;
    let (model, _) = train(
        records,
        &cfg,
        toy_encoder(records, &cfg).unwrap(),
        &ds.inventory,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let bytes = fs::read(&path).unwrap();

    fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(
        load_checkpoint(&path),
        Err(CheckpointError::Corrupt(_))
    ));
    fs::write(&path, b"").unwrap();
    assert!(matches!(
        load_checkpoint(&path),
        Err(CheckpointError::Corrupt(_))
    ));
    fs::write(
        &path,
        b"not a checkpoint at all, just text that is long enough",
    )
    .unwrap();
    assert!(matches!(
        load_checkpoint(&path),
        Err(CheckpointError::Corrupt(_))
    ));
    assert!(matches!(
        load_checkpoint(&dir.path().join("missing.ckpt")),
        Err(CheckpointError::Io { .. })
    ));
}

#[test]
fn foreign_inventory_is_detected() {
    let ds = generate_synthetic(4, 20, NoiseParams::none(), 0).unwrap();
    let cfg = TrainConfig {
        dim: 4,
        max_epochs: 2,
        ..TrainConfig::default()
    };
    let records = &ds.folds.folds[0].train;
    let (model, _) = train(
        records,
        &cfg,
        toy_encoder(records, &cfg).unwrap(),
        &ds.inventory,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&model, &path).unwrap();

    let other = generate_synthetic(5, 20, NoiseParams::none(), 0).unwrap();
    assert!(matches!(
        load_checkpoint_for(&path, &other.inventory),
        Err(CheckpointError::InventoryMismatch { .. })
    ));

    // same IDs in a different order is also a mismatch
    let mut reordered = conceptnorm::corpus::ConceptInventory::new();
    for id in ds.inventory.ids().iter().rev() {
        reordered.insert(id, None);
    }
    assert!(matches!(
        load_checkpoint_for(&path, &reordered),
        Err(CheckpointError::InventoryMismatch { .. })
    ));
}

#[test]
fn dataset_round_trip_is_lossless() {
    let ds = generate_synthetic(20, 200, NoiseParams::level(0.4), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path(), &ds).unwrap();
    let loaded = load_dataset(dir.path()).unwrap();
    assert_eq!(loaded, ds);

    let again = tempfile::tempdir().unwrap();
    save_dataset(again.path(), &loaded).unwrap();
    for rel in ["concepts.tsv", "fold_0/train.tsv", "fold_0/test.tsv"] {
        assert_eq!(
            fs::read(dir.path().join(rel)).unwrap(),
            fs::read(again.path().join(rel)).unwrap(),
            "{rel}"
        );
    }
}

#[test]
fn preprocessed_dataset_round_trip() {
    let mut ds = generate_synthetic(6, 40, NoiseParams::level(0.5), 2).unwrap();
    ds.preprocess(&Preprocessor::default());
    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path(), &ds).unwrap();
    let loaded = load_dataset(dir.path()).unwrap();
    assert!(loaded.folds.is_preprocessed());
    assert_eq!(loaded, ds);
}

#[test]
fn synthetic_output_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    save_dataset(
        a.path(),
        &generate_synthetic(20, 200, NoiseParams::level(0.3), 1).unwrap(),
    )
    .unwrap();
    save_dataset(
        b.path(),
        &generate_synthetic(20, 200, NoiseParams::level(0.3), 1).unwrap(),
    )
    .unwrap();
    for rel in ["concepts.tsv", "fold_0/train.tsv", "fold_0/test.tsv"] {
        assert_eq!(
            fs::read(a.path().join(rel)).unwrap(),
            fs::read(b.path().join(rel)).unwrap()
        );
    }
}

#[test]
fn loader_errors() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert!(load_dataset(root).is_err());

    fs::write(root.join("concepts.tsv"), "A\tAlpha\nB\tBeta\n").unwrap();
    fs::create_dir(root.join("fold_0")).unwrap();
    fs::write(root.join("fold_0/train.tsv"), "").unwrap();
    fs::write(root.join("fold_0/test.tsv"), "x\tA\n").unwrap();
    assert!(matches!(
        load_dataset(root),
        Err(CorpusError::Format { .. })
    ));

    fs::write(
        root.join("fold_0/train.tsv"),
        "# comment\nfine\tA\nbroken line\n",
    )
    .unwrap();
    match load_dataset(root) {
        Err(CorpusError::Format { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }

    fs::write(root.join("fold_0/train.tsv"), "fine\tA\nodd\tZ\n").unwrap();
    assert!(matches!(
        load_dataset(root),
        Err(CorpusError::UnknownConcept { .. })
    ));

    fs::write(root.join("fold_0/train.tsv"), "fine\tA\nother\tB\n").unwrap();
    let ds = load_dataset(root).unwrap();
    assert_eq!(ds.inventory.ids(), ["A", "B"]);
    assert_eq!(ds.inventory.term(1), Some("Beta"));
}
