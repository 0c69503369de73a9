use advreg::Checkpoint;
use advreg_core::harness::{predict_all, train, TrainConfig, TrainData};
use advreg_core::synth::{generate, SyntheticConfig};

fn trained() -> (Checkpoint, Vec<advreg_core::corpus::Instance>) {
    let c = generate(&SyntheticConfig { instances: 40, embedding_dim: 6, ..SyntheticConfig::default() });
    let cfg = TrainConfig { epochs: 2, batch_labeled: 8, filters: 6, ..TrainConfig::default() };
    let out = train(TrainData { labeled: &c.instances, ..TrainData::default() }, &c.embeddings, &cfg).unwrap();
    (Checkpoint::new(out.model, cfg), c.instances)
}

#[test]
fn save_load_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let (ck, data) = trained();
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(predict_all(&back.model, &data), predict_all(&ck.model, &data));
    assert_eq!(back.shapes["conv_filters"], [6, 3 * back.model.tables.layout.width()]);
}

#[test]
fn tampered_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let (ck, _) = trained();

    let mut bad = ck.clone();
    bad.config.seed += 1;
    bad.save(&path).unwrap();
    assert!(Checkpoint::load(&path).unwrap_err().to_string().contains("hash"));

    let mut bad = ck.clone();
    bad.shapes.insert("fc_b".into(), [1, 3]);
    bad.save(&path).unwrap();
    assert!(Checkpoint::load(&path).unwrap_err().to_string().contains("shapes"));

    let mut bad = ck;
    bad.version = 99;
    bad.save(&path).unwrap();
    assert!(Checkpoint::load(&path).is_err());

    std::fs::write(&path, "{").unwrap();
    assert!(Checkpoint::load(&path).is_err());
}
