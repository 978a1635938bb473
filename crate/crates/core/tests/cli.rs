//! End-to-end runs of the `tinycnn` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tinycnn::arch::tinynet;
use tinycnn::dataset::{synth_generate, write_pgm, DatasetSplit};
use tinycnn::store;
use tinycnn::train::{train, TrainConfig};
use tinycnn::{Shape, Tensor};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tinycnn")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn build_reports_totals() {
    let o = run(&["build", "--arch", "tinynet", "--filters", "4", "--n", "5"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("total params: 1159"), "{}", stdout(&o));

    let o = run(&["build", "--arch", "baseline-cnn"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("total params: 930411"));

    let o = run(&["build", "--arch", "tinynet", "--n", "9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("spatial extent exhausted"), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
}

#[test]
fn build_from_descriptor_file() {
    let tmp = tempfile::tempdir().unwrap();
    let desc = tmp.path().join("net.txt");
    fs::write(&desc, "# tiny pair\ntiny f=4\ntiny f=4\nconv 1x1 f=11\ngap\nsoftmax\n").unwrap();
    let o = run(&["build", "--arch", p(&desc)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("total params: 571"));

    fs::write(&desc, "tiny f=4\nconv 9x9 f=4\n").unwrap();
    let o = run(&["build", "--arch", p(&desc)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn bn_mode_changes_only_norm_rows() {
    let width = stdout(&run(&["build", "--arch", "tinynet", "--n", "1"]));
    let channel = stdout(&run(&[
        "build",
        "--arch",
        "tinynet",
        "--n",
        "1",
        "--bn-mode",
        "channel",
    ]));
    assert!(width.contains("total params: 307"));
    assert!(channel.contains("total params: 123"));
    let differing: Vec<(&str, &str)> = width.lines().zip(channel.lines()).filter(|(a, b)| a != b).collect();
    assert!(
        differing
            .iter()
            .all(|(a, _)| a.contains("batchnorm") || a.starts_with("total params")),
        "{differing:?}"
    );
}

#[test]
fn train_is_deterministic_and_echoes_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let (m1, m2) = (tmp.path().join("a.csv"), tmp.path().join("b.csv"));
    let model = tmp.path().join("m.tnet");
    let base = [
        "train",
        "--arch",
        "tinynet",
        "--n",
        "2",
        "--synthetic",
        "2",
        "--seed",
        "7",
        "--epochs",
        "2",
        "--out",
        p(&model),
    ];
    let o = run(&[&base[..], &["--metrics", p(&m1)]].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let header = stderr(&o);
    assert!(header.contains("alpha=0.1") && header.contains("batch=128"), "{header}");
    let o = run(&[&base[..], &["--metrics", p(&m2)]].concat());
    assert_eq!(o.status.code(), Some(0));
    let a = fs::read_to_string(&m1).unwrap();
    assert_eq!(a, fs::read_to_string(&m2).unwrap());
    assert!(a.starts_with("epoch,batch,loss,accuracy\n"));
    assert_eq!(a.lines().count(), 1 + 2);
    assert!(store::load_model(&model).is_ok());

    // defaults: 30 epochs of one batch each
    let o = run(&[
        "train",
        "--arch",
        "tinynet",
        "--n",
        "1",
        "--synthetic",
        "1",
        "--out",
        p(&model),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("alpha=0.1 epochs=30 batch=128"), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 31);
}

#[test]
fn train_input_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("m.tnet");
    let missing = tmp.path().join("nowhere");
    let o = run(&["train", "--arch", "tinynet", "--data", p(&missing), "--out", p(&model)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(p(&missing)), "{}", stderr(&o));
    assert!(!model.exists());

    let o = run(&["train", "--arch", "tinynet", "--out", p(&model)]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&[
        "train",
        "--arch",
        "tinynet",
        "--synthetic",
        "1",
        "--lr",
        "-1",
        "--out",
        p(&model),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("m.tnet");
    let o = run(&[
        "train",
        "--arch",
        "tinynet",
        "--n",
        "1",
        "--synthetic",
        "1",
        "--lr",
        "1e36",
        "--epochs",
        "5",
        "--batch",
        "4",
        "--out",
        p(&model),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"));
}

#[test]
fn train_from_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth_generate(2, 3);
    for (i, im) in data.train.iter().enumerate() {
        let dir = tmp.path().join("data").join(&data.class_names[im.label]);
        fs::create_dir_all(&dir).unwrap();
        write_pgm(&dir.join(format!("{i}.pgm")), &im.pixels).unwrap();
    }
    let manifest = tmp.path().join("classes.csv");
    let lines: Vec<String> = data
        .class_names
        .iter()
        .enumerate()
        .map(|(i, n)| format!("{n},{i}"))
        .collect();
    fs::write(&manifest, lines.join("\n")).unwrap();
    let model = tmp.path().join("m.tnet");
    let o = run(&[
        "train",
        "--arch",
        "tinynet",
        "--n",
        "1",
        "--data",
        p(&tmp.path().join("data")),
        "--manifest",
        p(&manifest),
        "--epochs",
        "1",
        "--out",
        p(&model),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("images=22"));
}

/// Trains tinynet(4,1) to saturation on a single image.
fn overfit_one(label: usize) -> (tinycnn::model::Model<f32>, Tensor<f32>) {
    let data = synth_generate(1, 11);
    let im = data.train.into_iter().find(|im| im.label == label).unwrap();
    let pixels = im.pixels.clone();
    let split = DatasetSplit {
        train: vec![im],
        test: vec![],
        class_names: vec![],
    };
    let cfg = TrainConfig {
        learning_rate: 0.01,
        epochs: 300,
        batch_size: 1,
        seed: 2,
        ..TrainConfig::default()
    };
    (train(&tinynet(4, 1, 11).unwrap(), &split, &cfg).unwrap().model, pixels)
}

#[test]
fn predict_overfit_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let (model, pixels) = overfit_one(6);
    let mpath = tmp.path().join("m.tnet");
    store::save_model(&model, &mpath).unwrap();
    let img = tmp.path().join("x.pgm");
    write_pgm(&img, &pixels).unwrap();
    let o = run(&["predict", "--model", p(&mpath), "--image", p(&img)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("class 6"));
    let probs: Vec<f64> = lines
        .next()
        .unwrap()
        .strip_prefix("probabilities ")
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(probs.len(), 11);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-6);

    let small = tmp.path().join("small.pgm");
    write_pgm(&small, &Tensor::zeros(Shape::new(1, 1, 48, 48).unwrap())).unwrap();
    let o = run(&["predict", "--model", p(&mpath), "--image", p(&small)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("96x96"));
}

#[test]
fn bench_reports_and_compares() {
    let o = run(&[
        "bench",
        "--arch",
        "tinynet",
        "--filters",
        "4",
        "--n",
        "5",
        "--runs",
        "3",
        "--warmup",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("params: 1159"));

    let o = run(&[
        "bench", "--arch", "tinynet", "--n", "1", "--runs", "1", "--format", "csv",
    ]);
    let out = stdout(&o);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "tinynet-4-1");
    assert_eq!(row[4].parse::<f64>().unwrap(), 0.0);

    let tmp = tempfile::tempdir().unwrap();
    let reference = tmp.path().join("baseline.csv");
    fs::write(
        &reference,
        "name,params,flops,mean_ms,std_ms,speedup\nbaseline-cnn,930411,1,1000.0,0.0,\n",
    )
    .unwrap();
    let o = run(&[
        "bench",
        "--arch",
        "tinynet",
        "--n",
        "1",
        "--runs",
        "2",
        "--format",
        "csv",
        "--against",
        p(&reference),
    ]);
    let out = stdout(&o);
    let speedup: f64 = out.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(speedup > 1.0);
    let o = run(&["bench", "--arch", "tinynet", "--runs", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn export_and_import_check() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["export", "--arch", "smallfirenet", "--n", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("smallfire s=4 e1=4 e3=4"));
    let spec = store::parse_descriptor(&text).unwrap();
    assert_eq!(spec, tinycnn::arch::smallfirenet(2, 11).unwrap());

    let model = tmp.path().join("m.tnet");
    store::save_model(&tinycnn::model::Model::init(&spec, 4), &model).unwrap();
    let o = run(&["import-check", "--model", p(&model)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("trainable_params 3235"));

    let mut bytes = fs::read(&model).unwrap();
    bytes[0] = b'X';
    fs::write(&model, &bytes).unwrap();
    let o = run(&["import-check", "--model", p(&model)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not a model file"));
}

#[test]
fn eval_runs_kfold() {
    let o = run(&[
        "eval",
        "--arch",
        "tinynet",
        "--n",
        "1",
        "--synthetic",
        "2",
        "--epochs",
        "1",
        "--folds",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("fold ")).count(), 2);
    assert!(out.contains("accuracy: ") && out.contains(" ± "));
}
