use std::fs;
use std::path::Path;

use mmfuse::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE, HISTORY_FILE, MODEL_FILE, PREDICTIONS_FILE, SUMMARY_FILE};
use mmfuse::data::{load_model, read_labels, save_model};
use mmfuse::fusion::{FusionModel, HeadDims, HeadKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mmfuse(args: &[&str]) -> i32 {
    run(std::iter::once("mmfuse").chain(args.iter().copied()))
}

fn summary(dir: &Path) -> Vec<(String, String)> {
    fs::read_to_string(dir.join(SUMMARY_FILE))
        .unwrap()
        .lines()
        .map(|l| {
            let (k, v) = l.split_once('=').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn value(dir: &Path, key: &str) -> String {
    summary(dir).into_iter().find(|(k, _)| k == key).unwrap().1
}

fn gen_small(dir: &Path) {
    let code = mmfuse(&[
        "--out", dir.to_str().unwrap(), "--reproducible", "gen-synthetic",
        "--seed", "3", "--n-train", "120", "--n-test", "30", "--n-val", "30",
    ]);
    assert_eq!(code, EXIT_OK);
}

#[test]
fn train_then_predict_then_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    gen_small(root);
    let s = |p: &str| root.join(p).to_str().unwrap().to_string();

    let run_dir = s("text");
    let code = mmfuse(&[
        "--out", &run_dir, "--reproducible", "train-head", "--kind", "text_linear",
        "--train", &s("train"), "--val", &s("val"), "--max-epochs", "3", "--lr", "0.01",
    ]);
    assert_eq!(code, EXIT_OK);
    let run_dir = Path::new(&run_dir);
    assert!(run_dir.join(MODEL_FILE).exists());
    let history = fs::read_to_string(run_dir.join(HISTORY_FILE)).unwrap();
    assert_eq!(history.lines().next(), Some("epoch,train_loss,val_loss,val_macro_f1"));
    assert!(history.lines().count() >= 2);

    let keys: Vec<String> = summary(run_dir).into_iter().map(|(k, _)| k).collect();
    assert_eq!(&keys[..6], ["command", "macro_f1", "mean_accuracy", "epochs", "seed", "wall_ms"]);
    assert_eq!(value(run_dir, "command"), "train-head");
    assert_eq!(value(run_dir, "wall_ms"), "0");
    assert_eq!(load_model(&run_dir.join(MODEL_FILE)).unwrap().kind(), HeadKind::TextLinear);

    let pred_dir = s("pred");
    let model = run_dir.join(MODEL_FILE);
    let code = mmfuse(&[
        "--out", &pred_dir, "predict", "--model", model.to_str().unwrap(), "--data", &s("test"),
    ]);
    assert_eq!(code, EXIT_OK);
    let pred_file = Path::new(&pred_dir).join(PREDICTIONS_FILE);
    let preds = read_labels(&pred_file).unwrap();
    assert_eq!(preds.len(), 30);
    assert!(preds.values().all(|l| !l.is_empty()));

    let eval_dir = s("eval");
    let truth = root.join("test").join("labels.csv");
    let code = mmfuse(&[
        "--out", &eval_dir, "evaluate", "--pred", pred_file.to_str().unwrap(),
        "--truth", truth.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let f1: f64 = value(Path::new(&eval_dir), "macro_f1").parse().unwrap();
    assert!((0.0..=1.0).contains(&f1));

    // the wrong kind is refused as a data error
    let code = mmfuse(&[
        "--out", &s("wrong"), "predict", "--model", model.to_str().unwrap(),
        "--data", &s("test"), "--kind", "concat_fcnn",
    ]);
    assert_eq!(code, EXIT_DATA);
}

#[test]
fn model_with_other_dims_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    gen_small(root);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dims = HeadDims { text: 4, image: 8 };
    let model = FusionModel::with_dims(HeadKind::ConcatFcnn, dims, 4, &mut rng).unwrap();
    let path = root.join("small.fus");
    save_model(&model, &path).unwrap();
    let code = mmfuse(&[
        "--out", root.join("p").to_str().unwrap(), "predict",
        "--model", path.to_str().unwrap(), "--data", root.join("test").to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_DATA);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    gen_small(root);
    let config = root.join("train.cfg");
    fs::write(&config, "# small run\nmax_epochs = 2\nseed = 9\nweighting = off\n").unwrap();
    let s = |p: &str| root.join(p).to_str().unwrap().to_string();

    let code = mmfuse(&[
        "--out", &s("a"), "train-head", "--kind", "vision_linear", "--train", &s("train"),
        "--val", &s("val"), "--config", config.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(value(&root.join("a"), "seed"), "9");
    assert!(value(&root.join("a"), "epochs").parse::<usize>().unwrap() <= 2);

    let code = mmfuse(&[
        "--out", &s("b"), "train-head", "--kind", "vision_linear", "--train", &s("train"),
        "--val", &s("val"), "--config", config.to_str().unwrap(), "--seed", "4",
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(value(&root.join("b"), "seed"), "4");

    fs::write(&config, "learning_rate = 1\n").unwrap();
    let code = mmfuse(&[
        "--out", &s("c"), "train-head", "--kind", "vision_linear", "--train", &s("train"),
        "--val", &s("val"), "--config", config.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn fuse_needs_two_logit_files() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    gen_small(root);
    let s = |p: &str| root.join(p).to_str().unwrap().to_string();
    for (kind, dir) in [("text_linear", "t"), ("vision_linear", "v")] {
        let code = mmfuse(&[
            "--out", &s(dir), "train-head", "--kind", kind, "--train", &s("train"),
            "--val", &s("val"), "--max-epochs", "2",
        ]);
        assert_eq!(code, EXIT_OK);
        let model = root.join(dir).join(MODEL_FILE);
        let code = mmfuse(&[
            "--out", &s(&format!("{dir}p")), "predict", "--model", model.to_str().unwrap(),
            "--data", &s("val"),
        ]);
        assert_eq!(code, EXIT_OK);
    }
    let ids = root.join("val").join("ids.csv");
    let (lt, lv) = (s("tp/logits.femb"), s("vp/logits.femb"));

    let code = mmfuse(&["--out", &s("f1"), "fuse-logits", "--logits", &lt, "--ids", ids.to_str().unwrap()]);
    assert_eq!(code, EXIT_USAGE);

    let truth = root.join("val").join("labels.csv");
    let code = mmfuse(&[
        "--out", &s("f2"), "fuse-logits", "--logits", &lt, &lv, "--ids", ids.to_str().unwrap(),
        "--truth", truth.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(read_labels(&root.join("f2").join(PREDICTIONS_FILE)).unwrap().len(), 30);
    assert_ne!(value(&root.join("f2"), "macro_f1"), "na");
}

#[test]
fn missing_input_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let code = mmfuse(&[
        "--out", out.to_str().unwrap(), "evaluate", "--pred", "/nonexistent/p.csv",
        "--truth", "/nonexistent/t.csv",
    ]);
    assert_eq!(code, EXIT_DATA);
}
