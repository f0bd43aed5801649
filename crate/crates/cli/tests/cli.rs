use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use conceptdet::pipeline::pgm::encode_pgm;
use conceptdet::pipeline::{write_dataset, CONCEPTS_FILE};
use conceptdet::synthetic::{separable_dataset, SyntheticSpec};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conceptdet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn evaluate_self_comparison_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.tsv");
    fs::write(&truth, "a\tC1;C2\nb\tC3\n").unwrap();
    let o = run(&["evaluate", "--truth", p(&truth), "--pred", p(&truth)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "1.0\n");
}

#[test]
fn evaluate_two_sample_example() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.tsv");
    let pred = dir.path().join("pred.tsv");
    // a: truth {C1,C2}, pred {C1,C3} -> tp 1, fp 1, fn 1 -> 0.5; b: exact -> 1.0
    fs::write(&truth, "a\tC1;C2\nb\tC4\n").unwrap();
    // row order differs from the truth file
    fs::write(&pred, "b\tC4\na\tC3;C1\n").unwrap();
    let o = run(&["evaluate", "--truth", p(&truth), "--pred", p(&pred)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "0.75\n");
}

#[test]
fn evaluate_is_driven_by_truth() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.tsv");
    let pred = dir.path().join("pred.tsv");
    fs::write(&truth, "a\tC1\nb\tC2\n").unwrap();
    fs::write(&pred, "a\tC1\n").unwrap();
    assert_eq!(
        stdout(&run(&[
            "evaluate",
            "--truth",
            p(&truth),
            "--pred",
            p(&pred)
        ])),
        "0.5\n"
    );
    // predictions without ground truth are ignored
    fs::write(&pred, "a\tC1\nz\tC1\n").unwrap();
    let o = run(&["evaluate", "--truth", p(&truth), "--pred", p(&pred)]);
    assert_eq!(stdout(&o), "0.5\n");
    assert!(String::from_utf8_lossy(&o.stderr).contains("ignoring 1 prediction"));
}

#[test]
fn stats_on_hand_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let img = encode_pgm(1, 1, &[0.5]);
    for id in ["s1", "s2", "s3"] {
        fs::write(dir.path().join(format!("{id}.pgm")), &img).unwrap();
    }
    // 2, 4 and 6 labels over 8 distinct concepts
    fs::write(
        dir.path().join(CONCEPTS_FILE),
        "s1\tC1;C2\ns2\tC1;C2;C3;C4\ns3\tC3;C4;C5;C6;C7;C8\n",
    )
    .unwrap();
    let out = dir.path().join("report");
    let o = run(&["stats", "--data", p(dir.path()), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("label_cardinality,4.0\n"), "{text}");
    assert!(text.contains("label_density,0.5\n"), "{text}");
    assert_eq!(
        fs::read_to_string(out.join("concept_count.csv")).unwrap(),
        "concept_count,images\n2,1\n4,1\n6,1\n"
    );
    let freq = fs::read_to_string(out.join("concept_frequency.csv")).unwrap();
    assert!(
        freq.starts_with("concept,images\nC1,2\nC2,2\nC3,2\nC4,2\nC5,1\n"),
        "{freq}"
    );
}

#[test]
fn validate_submission_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.tsv");
    let bad = dir.path().join("bad.tsv");
    fs::write(&good, "a\tC1;C2\n").unwrap();
    fs::write(&bad, "a\tC1;C1\n").unwrap();
    assert_eq!(
        run(&["validate-submission", "--file", p(&good)])
            .status
            .code(),
        Some(0)
    );
    let o = run(&["validate-submission", "--file", p(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("repeated concept C1"));

    let vocab = dir.path().join("vocab.tsv");
    fs::write(&vocab, "x\tC1\n").unwrap();
    let o = run(&[
        "validate-submission",
        "--file",
        p(&good),
        "--vocab",
        p(&vocab),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("unknown concept C2"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["evaluate", "--truth"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        run(&["split", "--data", "/nonexistent", "--out", "/tmp/x"])
            .status
            .code(),
        Some(2)
    );
    let o = run(&[
        "evaluate",
        "--truth",
        "/nonexistent/a.tsv",
        "--pred",
        "/nonexistent/b.tsv",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn split_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        samples: 21,
        features: 4,
        labels: 3,
        mean_labels: 1.5,
        margin: 0.1,
    };
    write_dataset(dir.path(), &separable_dataset(&spec, 1).unwrap()).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&[
            "split",
            "--data",
            p(dir.path()),
            "--seed",
            "5",
            "--out",
            p(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let v1 = fs::read_to_string(a.join("val1.tsv")).unwrap();
    assert_eq!(v1, fs::read_to_string(b.join("val1.tsv")).unwrap());
    assert_eq!(v1.lines().count(), 11);
    assert_eq!(
        fs::read_to_string(a.join("val2.tsv"))
            .unwrap()
            .lines()
            .count(),
        10
    );
}

#[test]
fn train_predict_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        samples: 80,
        features: 6,
        labels: 4,
        mean_labels: 1.8,
        margin: 0.25,
    };
    let data = dir.path().join("data");
    write_dataset(&data, &separable_dataset(&spec, 9).unwrap()).unwrap();
    let o = run(&[
        "split",
        "--data",
        p(&data),
        "--seed",
        "1",
        "--out",
        p(dir.path()),
    ]);
    assert!(o.status.success());

    let config = dir.path().join("train.conf");
    fs::write(
        &config,
        "loss=sum\nbatch_size=16\nlearning_rate=0.01\nearly_stopping_patience=5\n\
         max_epochs=15\nthreshold=0.5\nhidden_sizes=8\ndropout=0\nlr_reduction=0.2/3/loss\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    let train = |out: &Path| {
        run(&[
            "train",
            "--train",
            p(&data),
            "--train-manifest",
            p(&dir.path().join("val1.tsv")),
            "--val",
            p(&data),
            "--val-manifest",
            p(&dir.path().join("val2.tsv")),
            "--config",
            p(&config),
            "--set",
            "max_epochs=12",
            "--seed",
            "3",
            "--out",
            p(out),
        ])
    };
    let o = train(&out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_loss,val_f1,lr\n"));
    assert!(history.lines().count() <= 13);

    // same seed, same history
    let again = dir.path().join("run2");
    assert!(train(&again).status.success());
    assert_eq!(
        history,
        fs::read_to_string(again.join("history.csv")).unwrap()
    );
    assert_eq!(
        fs::read(out.join("model.ckpt")).unwrap(),
        fs::read(again.join("model.ckpt")).unwrap()
    );

    let sub = dir.path().join("submission.tsv");
    let model = out.join("model.ckpt");
    let o = run(&[
        "predict",
        "--model",
        p(&model),
        "--data",
        p(&data),
        "--out",
        p(&sub),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let truth = data.join(CONCEPTS_FILE);
    let v = run(&[
        "validate-submission",
        "--file",
        p(&sub),
        "--vocab",
        p(&truth),
    ]);
    assert_eq!(v.status.code(), Some(0), "{}", stdout(&v));
    assert_eq!(fs::read_to_string(&sub).unwrap().lines().count(), 80);

    let o = run(&["evaluate", "--truth", p(&truth), "--pred", p(&sub)]);
    let f1: f64 = stdout(&o).trim().parse().unwrap();
    assert!((0.0..=1.0).contains(&f1));

    // a near-zero threshold still respects the concept cap and validates
    let o = run(&[
        "predict",
        "--model",
        p(&model),
        "--data",
        p(&data),
        "--threshold",
        "0.001",
        "--out",
        p(&sub),
    ]);
    assert!(o.status.success());
    assert_eq!(
        run(&["validate-submission", "--file", p(&sub)])
            .status
            .code(),
        Some(0)
    );
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        samples: 10,
        features: 4,
        labels: 2,
        mean_labels: 1.2,
        margin: 0.1,
    };
    write_dataset(dir.path(), &separable_dataset(&spec, 1).unwrap()).unwrap();
    let config = dir.path().join("c.conf");
    // no early_stopping_patience
    fs::write(&config, "loss=bce\nbatch_size=4\nlearning_rate=0.01\nmax_epochs=2\nthreshold=0.5\nhidden_sizes=none\ndropout=0\n").unwrap();
    let o = run(&[
        "train",
        "--train",
        p(dir.path()),
        "--val",
        p(dir.path()),
        "--config",
        p(&config),
        "--seed",
        "1",
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("early_stopping_patience"));
}

#[test]
fn shipped_config_template_parses() {
    let text = fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/default.conf"
    ))
    .unwrap();
    assert_eq!(text, conceptdet::pipeline::config::TEMPLATE);
}

#[test]
fn gradcheck_reports_every_loss() {
    let o = run(&["gradcheck", "--seed", "1", "--instances", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for name in ["bce", "one_minus_soft_f1", "product", "sum"] {
        assert!(
            text.contains(&format!("{name}: max relative error")),
            "{text}"
        );
    }
}
