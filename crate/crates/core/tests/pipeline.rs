use std::path::Path;

use tokweight::error::Error;
use tokweight::model::{save_checkpoint, train_steps, Model, StepLog, TrainState, MANIFEST_FILE, TENSOR_FILE};
use tokweight::pipeline::{
    build_train_data, cmd_eval, cmd_quantize, cmd_synth, cmd_train, load_data, load_ids, quant_dir, train_dir, Inputs,
    RunConfig, CHECKPOINT_DIR, LOG_FILE,
};

fn small(steps: u64, every: u64) -> RunConfig {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/small.json")).unwrap();
    RunConfig::from_json(
        &text,
        &[format!("train.steps={steps}"), format!("train.checkpoint_every={every}")],
    )
    .unwrap()
}

fn upstream(cfg: &RunConfig, out: &Path) {
    cmd_synth(cfg, out).unwrap();
    cmd_quantize(cfg, out, &Inputs::default()).unwrap();
}

#[test]
fn interrupted_training_resumes_to_the_same_bytes() {
    let cfg = small(20, 10);
    let straight = tempfile::tempdir().unwrap();
    upstream(&cfg, straight.path());
    let full = cmd_train(&cfg, straight.path(), &Inputs::default()).unwrap();

    // replay a run that died after its step-10 checkpoint, with one log line past it
    let broken = tempfile::tempdir().unwrap();
    let out = broken.path();
    let inputs = Inputs::default();
    upstream(&cfg, out);
    let data = load_data(&tokweight::pipeline::data_dir(&cfg, out, &inputs)).unwrap();
    let (_, ids) = load_ids(&quant_dir(&cfg, out, &inputs)).unwrap();
    let train = build_train_data(&cfg, &data, &ids).unwrap();
    let mut model = Model::<f32>::init(&cfg.model).unwrap();
    let mut state = TrainState::new(&model, &cfg.train);
    let mut log = String::new();
    train_steps(&mut model, &mut state, &train, &cfg.train, 11, |_, _, e: &StepLog| {
        log.push_str(&serde_json::to_string(e).unwrap());
        log.push('\n');
        Ok(())
    })
    .unwrap();
    let dir = train_dir(&cfg, out, &inputs);
    std::fs::create_dir_all(dir.join(CHECKPOINT_DIR)).unwrap();
    let mut at10 = Model::<f32>::init(&cfg.model).unwrap();
    let mut s10 = TrainState::new(&at10, &cfg.train);
    train_steps(&mut at10, &mut s10, &train, &cfg.train, 10, |_, _, _| Ok(())).unwrap();
    save_checkpoint(&dir.join(CHECKPOINT_DIR), &at10, &s10, &cfg.train).unwrap();
    std::fs::write(dir.join(LOG_FILE), &log).unwrap();

    let resumed = cmd_train(&cfg, out, &inputs).unwrap();
    assert_eq!(resumed, dir);
    for f in [format!("{CHECKPOINT_DIR}/{TENSOR_FILE}"), format!("{CHECKPOINT_DIR}/{MANIFEST_FILE}"), LOG_FILE.into()] {
        assert_eq!(
            std::fs::read(full.join(&f)).unwrap(),
            std::fs::read(resumed.join(&f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn changed_config_refuses_a_foreign_checkpoint() {
    let cfg = small(4, 0);
    let tmp = tempfile::tempdir().unwrap();
    upstream(&cfg, tmp.path());
    let dir = cmd_train(&cfg, tmp.path(), &Inputs::default()).unwrap();
    let other = small(6, 0);
    let inputs = Inputs {
        train: Some(dir),
        ..Inputs::default()
    };
    assert!(matches!(cmd_train(&other, tmp.path(), &inputs), Err(Error::Config(_))));
}

#[test]
fn missing_stages_name_their_producer() {
    let cfg = small(4, 0);
    let tmp = tempfile::tempdir().unwrap();
    match cmd_quantize(&cfg, tmp.path(), &Inputs::default()) {
        Err(Error::MissingArtifact { producer, .. }) => assert!(producer.contains("tokweight synth")),
        other => panic!("expected a missing artifact, got {other:?}"),
    }
    upstream(&cfg, tmp.path());
    match cmd_eval(&cfg, tmp.path(), &Inputs::default()) {
        Err(Error::MissingArtifact { producer, .. }) => assert_eq!(producer, "tokweight train"),
        other => panic!("expected a missing artifact, got {other:?}"),
    }
}
