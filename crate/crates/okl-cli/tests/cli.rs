//! End-to-end tests of the `okl` binary: exit codes, file round-trips and
//! output formats.

use std::path::Path;
use std::process::{Command, Output};

use okl_core::dataio;

fn okl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_okl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Deterministic two-task dataset written in the text format.
fn write_two_task_dataset(path: &Path) {
    let ds = dataio::synth_clustered(2, &[vec![1], vec![2]], 12, 4, 0.0, 42).unwrap();
    std::fs::write(path, dataio::serialize_dataset(&ds)).unwrap();
}

/// Three linearly separable classes in one-vs-all encoding: class `c`
/// becomes task `c`, every sample appears once per task with a +/-1 label.
fn write_three_class_dataset(path: &Path) -> usize {
    let mut lines = String::new();
    let mut count = 0;
    for class in 1..=3usize {
        for s in 0..6 {
            let jitter = 0.1 * (s as f64 - 2.5);
            let mut x = [0.2 + jitter * 0.05; 3];
            x[class - 1] = 3.0 + jitter;
            for task in 1..=3usize {
                let y = if task == class { 1 } else { -1 };
                lines.push_str(&format!("{task} {y} 1:{} 2:{} 3:{}\n", x[0], x[1], x[2]));
            }
            count += 1;
        }
    }
    std::fs::write(path, lines).unwrap();
    count
}

#[test]
fn train_converges_and_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.txt");
    write_two_task_dataset(&data);
    let out = okl(
        dir.path(),
        &[
            "train",
            "--data",
            "train.txt",
            "--loss",
            "hinge",
            "--reg",
            "pnorm",
            "--k",
            "1",
            "--lambda",
            "1",
            "--C",
            "1",
            "--seed",
            "7",
            "--max-epochs",
            "500",
            "--out",
            "model.okl",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("epochs "));
    assert!(text.contains("gap "));
    assert!(text.contains("wall_seconds "));
    let model =
        okl_core::model::load(&std::fs::read_to_string(dir.path().join("model.okl")).unwrap())
            .unwrap();
    assert!(model.report.converged);
    assert!(model.report.final_gap <= 1e-3);
}

#[test]
fn train_exit_codes_for_bad_file_and_epoch_cap() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.txt"), "1 +1 3:abc\n").unwrap();
    let out = okl(
        dir.path(),
        &["train", "--data", "bad.txt", "--out", "m.okl"],
    );
    assert_eq!(out.status.code(), Some(1), "{out:?}");

    let data = dir.path().join("train.txt");
    write_two_task_dataset(&data);
    let out = okl(
        dir.path(),
        &[
            "train",
            "--data",
            "train.txt",
            "--max-epochs",
            "1",
            "--gap-tol",
            "1e-12",
            "--out",
            "m.okl",
        ],
    );
    assert_eq!(out.status.code(), Some(3), "{out:?}");
}

#[test]
fn predict_emits_task_score_lines() {
    let dir = tempfile::tempdir().unwrap();
    write_two_task_dataset(&dir.path().join("train.txt"));
    okl(
        dir.path(),
        &[
            "train",
            "--data",
            "train.txt",
            "--out",
            "m.okl",
            "--max-epochs",
            "500",
        ],
    );
    let out = okl(
        dir.path(),
        &["predict", "--model", "m.okl", "--data", "train.txt"],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 24);
    for line in text.lines() {
        let mut parts = line.split_whitespace();
        parts.next().unwrap().parse::<i64>().unwrap();
        parts.next().unwrap().parse::<f64>().unwrap();
    }

    // --digits rounds the numeric output to scientific notation
    let out = okl(
        dir.path(),
        &[
            "predict",
            "--model",
            "m.okl",
            "--data",
            "train.txt",
            "--digits",
            "3",
        ],
    );
    let rounded = stdout(&out);
    let first_score = rounded
        .lines()
        .next()
        .unwrap()
        .split_whitespace()
        .nth(1)
        .unwrap();
    assert!(
        first_score.contains('e') && first_score.len() <= 9,
        "unexpected --digits formatting: {first_score}"
    );
}

#[test]
fn multiclass_toy_reaches_perfect_training_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    write_three_class_dataset(&dir.path().join("mc.txt"));
    let out = okl(
        dir.path(),
        &[
            "train",
            "--data",
            "mc.txt",
            "--loss",
            "hinge",
            "--C",
            "10",
            "--lambda",
            "0.5",
            "--max-epochs",
            "2000",
            "--out",
            "m.okl",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let out = okl(
        dir.path(),
        &[
            "eval", "--model", "m.okl", "--data", "mc.txt", "--metric", "acc",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("all,acc,1"), "{text}");

    // predictions in --multiclass mode list the argmax class per line
    let out = okl(
        dir.path(),
        &[
            "predict",
            "--model",
            "m.okl",
            "--data",
            "mc.txt",
            "--multiclass",
        ],
    );
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 54);
    for line in text.lines() {
        let c: i64 = line.trim().parse().unwrap();
        assert!((1..=3).contains(&c));
    }
}

#[test]
fn eval_auc_reports_per_task_and_macro_rows() {
    let dir = tempfile::tempdir().unwrap();
    write_two_task_dataset(&dir.path().join("train.txt"));
    okl(
        dir.path(),
        &[
            "train",
            "--data",
            "train.txt",
            "--out",
            "m.okl",
            "--max-epochs",
            "500",
        ],
    );
    let out = okl(
        dir.path(),
        &[
            "eval",
            "--model",
            "m.okl",
            "--data",
            "train.txt",
            "--metric",
            "auc",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = stdout(&out);
    assert!(text.starts_with("task,metric,value\n"));
    assert!(text.contains("macro,auc,"));
    // separable training data: every per-task AUC is 1
    for line in text.lines().skip(1) {
        let value: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((value - 1.0).abs() < 1e-9, "{line}");
    }
}

#[test]
fn export_theta_formats() {
    let dir = tempfile::tempdir().unwrap();
    write_two_task_dataset(&dir.path().join("train.txt"));
    okl(
        dir.path(),
        &[
            "train",
            "--data",
            "train.txt",
            "--out",
            "m.okl",
            "--max-epochs",
            "500",
        ],
    );
    let out = okl(
        dir.path(),
        &[
            "export-theta",
            "--model",
            "m.okl",
            "--format",
            "csv",
            "--transform",
            "abs",
            "--out",
            "theta.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let csv = std::fs::read_to_string(dir.path().join("theta.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    for line in csv.lines() {
        for field in line.split(',') {
            assert!(field.parse::<f64>().unwrap() >= 0.0);
        }
    }
    let out = okl(
        dir.path(),
        &[
            "export-theta",
            "--model",
            "m.okl",
            "--format",
            "pgm",
            "--transform",
            "log1p-abs",
            "--drop-diagonal",
            "--out",
            "theta.pgm",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let pgm = std::fs::read_to_string(dir.path().join("theta.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n2 2\n255\n"));
}

#[test]
fn cv_emits_best_line_and_table_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    write_two_task_dataset(&dir.path().join("train.txt"));
    let run = || {
        let out = okl(
            dir.path(),
            &[
                "cv",
                "--data",
                "train.txt",
                "--loss",
                "hinge",
                "--reg",
                "pnorm",
                "--k",
                "1",
                "--grid-C",
                "0.5,1",
                "--grid-lambda",
                "1,2",
                "--folds",
                "3",
                "--metric",
                "auc",
                "--seed",
                "11",
                "--max-epochs",
                "200",
            ],
        );
        assert_eq!(out.status.code(), Some(0), "{out:?}");
        stdout(&out)
    };
    let first = run();
    assert!(first.lines().next().unwrap().starts_with("best C "));
    assert!(first.contains("C,lambda,mean_score"));
    assert_eq!(first, run());
}

#[test]
fn identical_seeds_give_byte_identical_models() {
    let dir = tempfile::tempdir().unwrap();
    write_two_task_dataset(&dir.path().join("train.txt"));
    for name in ["a.okl", "b.okl"] {
        let out = okl(
            dir.path(),
            &[
                "train",
                "--data",
                "train.txt",
                "--seed",
                "123",
                "--max-epochs",
                "300",
                "--out",
                name,
            ],
        );
        assert_eq!(out.status.code(), Some(0), "{out:?}");
    }
    let a = std::fs::read(dir.path().join("a.okl")).unwrap();
    let b = std::fs::read(dir.path().join("b.okl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    write_two_task_dataset(&dir.path().join("train.txt"));
    std::fs::write(dir.path().join("okl.conf"), "lambda 2\nmax-epochs 400\n").unwrap();
    let out = okl(
        dir.path(),
        &[
            "train",
            "--config",
            "okl.conf",
            "--data",
            "train.txt",
            "--out",
            "m.okl",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = std::fs::read_to_string(dir.path().join("m.okl")).unwrap();
    assert!(
        text.contains("lambda 2.0000000000000000e0"),
        "config lambda not applied"
    );

    // explicit flag beats the config value
    let out = okl(
        dir.path(),
        &[
            "train",
            "--config",
            "okl.conf",
            "--data",
            "train.txt",
            "--lambda",
            "3",
            "--out",
            "m2.okl",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = std::fs::read_to_string(dir.path().join("m2.okl")).unwrap();
    assert!(
        text.contains("lambda 3.0000000000000000e0"),
        "flag should override config"
    );
}

#[test]
fn precomputed_kernel_flow() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataio::synth_clustered(2, &[vec![1], vec![2]], 8, 3, 0.0, 9).unwrap();
    std::fs::write(dir.path().join("train.txt"), dataio::serialize_dataset(&ds)).unwrap();
    let gram = okl_core::kernels::gram(&ds, &okl_core::kernels::KernelSpec::Linear).unwrap();
    std::fs::write(dir.path().join("gram.csv"), gram.to_csv_string()).unwrap();
    let out = okl(
        dir.path(),
        &[
            "train",
            "--data",
            "train.txt",
            "--kernel",
            "precomputed",
            "--gram",
            "gram.csv",
            "--max-epochs",
            "500",
            "--out",
            "m.okl",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");

    // kernel rows against the training set = Gram rows
    let mut rows = String::new();
    for i in 0..ds.n() {
        let row: Vec<String> = (0..ds.n()).map(|j| format!("{}", gram.get(i, j))).collect();
        rows.push_str(&row.join(","));
        rows.push('\n');
    }
    std::fs::write(dir.path().join("rows.csv"), rows).unwrap();
    let out = okl(
        dir.path(),
        &[
            "predict",
            "--model",
            "m.okl",
            "--data",
            "train.txt",
            "--gram-rows",
            "rows.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert_eq!(stdout(&out).lines().count(), ds.n());

    // predicting without rows must fail cleanly for precomputed models
    let out = okl(
        dir.path(),
        &["predict", "--model", "m.okl", "--data", "train.txt"],
    );
    assert_eq!(out.status.code(), Some(1), "{out:?}");
}

#[test]
fn verify_passes_and_fails_with_zero_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let out = okl(dir.path(), &["verify", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = stdout(&out);
    for name in ["closed-form-maximizer", "psd-preservation", "dual-gradient"] {
        assert!(text.contains(&format!("check {name}: ok")), "{text}");
    }
    let out = okl(dir.path(), &["verify", "--seed", "3", "--tolerance", "0"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn bench_emits_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = okl(
        dir.path(),
        &[
            "bench",
            "--tasks",
            "2,3",
            "--samples-per-task",
            "6",
            "--dim",
            "4",
            "--variants",
            "sdca-newton,sdca-cubic",
            "--max-epochs",
            "500",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = stdout(&out);
    assert!(text.starts_with("T,variant,seconds,reached_target,target_primal\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn unknown_task_id_is_a_numeric_error() {
    let dir = tempfile::tempdir().unwrap();
    write_two_task_dataset(&dir.path().join("train.txt"));
    okl(
        dir.path(),
        &[
            "train",
            "--data",
            "train.txt",
            "--out",
            "m.okl",
            "--max-epochs",
            "300",
        ],
    );
    std::fs::write(dir.path().join("alien.txt"), "99 1 1:0.5 2:0.5\n").unwrap();
    let out = okl(
        dir.path(),
        &["predict", "--model", "m.okl", "--data", "alien.txt"],
    );
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

/// Regression flow: eps-SVR training and explained-variance evaluation.
#[test]
fn regression_flow_eps_svr_with_explained_variance() {
    let dir = tempfile::tempdir().unwrap();
    // two related regression tasks sharing a weight vector
    let mut lines = String::new();
    let w = [[1.0, -0.5, 0.25], [0.9, -0.6, 0.30]];
    let mut s = 12345u64;
    let mut unif = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    for t in 0..2usize {
        for _ in 0..15 {
            let x = [unif(), unif(), unif()];
            let y: f64 = x.iter().zip(&w[t]).map(|(a, b)| a * b).sum();
            lines.push_str(&format!(
                "{} {y} 1:{} 2:{} 3:{}\n",
                t + 1,
                x[0],
                x[1],
                x[2]
            ));
        }
    }
    std::fs::write(dir.path().join("reg.txt"), lines).unwrap();
    let out = okl(
        dir.path(),
        &[
            "train", "--data", "reg.txt", "--loss", "eps-svr", "--epsilon", "0.01", "--C", "10",
            "--lambda", "0.1", "--max-epochs", "3000", "--out", "m.okl",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let out = okl(
        dir.path(),
        &["eval", "--model", "m.okl", "--data", "reg.txt", "--metric", "ev"],
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = stdout(&out);
    let macro_line = text.lines().find(|l| l.starts_with("macro,ev,")).unwrap();
    let ev: f64 = macro_line.rsplit(',').next().unwrap().parse().unwrap();
    assert!(ev > 90.0, "explained variance too low: {ev}% ({text})");
}
