use ftjnf_kd::losses::KdMethod;
use ftjnf_kd::model::{FtJnfModel, SizePreset};
use ftjnf_kd::scene::{generate_examples, SceneSimulator, SnrSpec, Split, SyntheticCorpus};
use ftjnf_kd::seed::derive_seed;
use ftjnf_kd::trainer::{read_best, read_metrics, run_two_stage_kd, train_teacher, Dataset, TrainConfig, METRICS_FILE};
use ftjnf_kd::Error;

fn dataset(train: usize, val: usize, len: usize) -> Dataset {
    let sim = SceneSimulator::default();
    let corpus = SyntheticCorpus::default();
    let make = |split, n| generate_examples(&sim, &corpus, split, "trainer-test", n, len, SnrSpec::default(), 11).unwrap();
    Dataset {
        train: make(Split::Train, train),
        val: make(Split::Val, val),
    }
}

fn short_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        crop_seconds: 0.5,
        max_epochs: epochs,
        ..TrainConfig::default()
    }
}

#[test]
fn overfits_a_handful_of_examples() {
    let data = dataset(8, 2, 16000);
    let cfg = TrainConfig {
        crop_seconds: 1.0,
        max_epochs: 30,
        early_stop_patience: 31,
        ..TrainConfig::default()
    };
    let out = train_teacher(&SizePreset::I.config(), &data, &cfg).unwrap();
    let train: Vec<f64> = out.history.iter().filter_map(|r| r.train_loss).collect();
    let last = *train.last().unwrap();
    assert!(last <= 0.5 * train[0], "training loss {} -> {last} over {} epochs", train[0], train.len());
}

#[test]
fn same_seed_gives_same_curves() {
    let data = dataset(4, 1, 8000);
    let a = train_teacher(&SizePreset::I.config(), &data, &short_config(2)).unwrap();
    let b = train_teacher(&SizePreset::I.config(), &data, &short_config(2)).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model, b.model);
    let mut other = short_config(2);
    other.seed += 1;
    let c = train_teacher(&SizePreset::I.config(), &data, &other).unwrap();
    assert_ne!(a.history, c.history);
}

#[test]
fn empty_splits_are_rejected() {
    let mut data = dataset(2, 1, 8000);
    data.val.clear();
    let err = train_teacher(&SizePreset::I.config(), &data, &short_config(1)).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err}");
    let mut data = dataset(2, 1, 8000);
    data.train.clear();
    assert!(matches!(
        train_teacher(&SizePreset::I.config(), &data, &short_config(1)),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn mask_distillation_from_an_identical_teacher_is_a_no_op() {
    let data = dataset(4, 1, 8000);
    let cfg = short_config(1);
    let cfg_i = SizePreset::I.config();
    let teacher = FtJnfModel::init(&cfg_i, derive_seed(cfg.seed, "student/init", 0)).unwrap();
    let out = run_two_stage_kd(&teacher, &cfg_i, Some(KdMethod::Mask), &data, &cfg).unwrap();
    let stage1 = out.stage1.unwrap();
    assert_eq!(stage1.initial_val_loss, 0.0);
    assert_eq!(stage1.history[1].train_loss, Some(0.0));
    assert_eq!(stage1.model, teacher);
}

#[test]
fn checkpoints_point_at_the_best_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(4, 2, 8000);
    let mut cfg = short_config(3);
    cfg.lr_init = 2e-3;
    cfg.checkpoint_dir = Some(dir.path().to_path_buf());
    let out = train_teacher(&SizePreset::I.config(), &data, &cfg).unwrap();
    let best = read_best(&dir.path().join("teacher")).unwrap();
    assert_eq!(best.epoch, out.best_epoch);
    assert_eq!(best.val_loss, out.best_val_loss);
    let min = out.history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(best.val_loss, min);
    let saved = ftjnf_kd::model::load_model(&dir.path().join("teacher").join(&best.model)).unwrap();
    assert_eq!(saved.model, out.model);
    let log = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(log, out.history);
    assert_eq!(log[0].train_loss, None);
}
