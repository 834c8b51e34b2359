use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bcs_cf::cli::{
    EXIT_ARGUMENT, EXIT_FORMAT, EXIT_IO, EXIT_PARSE, EXIT_UNKNOWN_ID, EXIT_VALIDATION,
};
use bcs_cf::eval::ExperimentResult;
use bcs_cf::solver::init_factors;
use bcs_cf::{FactorModel, SolverConfig};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bcs-cf"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn toy_file(dir: &Path) -> PathBuf {
    let mut text = String::new();
    for u in 1..=10u32 {
        for i in 1..=12u32 {
            if (u * 7 + i * 3) % 4 != 0 {
                let rating = 1 + (u + 2 * i) % 5;
                text += &format!("{u}\t{i}\t{rating}\t{}\n", u * 100 + i);
            }
        }
    }
    let path = dir.join("u.data");
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 6] = ["--rank", "2", "--lambda-u", "1", "--max-iters", "15"];

#[test]
fn inspect_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_file(dir.path());
    let o = bin(&["inspect", "--dataset", s(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("users: 10\n"));
    assert!(out.contains("items: 12\n"));
    assert!(out.contains("ratings: 90\n"));
    assert!(out.contains("density: 0.750000"));
}

#[test]
fn data_errors_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.data");
    std::fs::write(&empty, "").unwrap();
    let o = bin(&["inspect", "--dataset", s(&empty)]);
    assert_eq!(o.status.code(), Some(EXIT_VALIDATION));
    assert!(stderr(&o).contains("empty.data"));

    let bad = dir.path().join("bad.data");
    std::fs::write(&bad, "1\t2\tthree\t0\n").unwrap();
    let o = bin(&["inspect", "--dataset", s(&bad)]);
    assert_eq!(o.status.code(), Some(EXIT_PARSE));
    assert!(stderr(&o).contains("bad.data:1"));

    let o = bin(&["inspect", "--dataset", s(&dir.path().join("nope"))]);
    assert_eq!(o.status.code(), Some(EXIT_IO));

    let o = bin(&["inspect"]);
    assert_eq!(o.status.code(), Some(EXIT_ARGUMENT));
}

#[test]
fn train_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_file(dir.path());
    let model = dir.path().join("m.bcs");
    let report = dir.path().join("fit.toml");
    let mut args = vec![
        "train",
        "--dataset",
        s(&data),
        "--model",
        s(&model),
        "--out",
        s(&report),
    ];
    args.extend(SMALL);
    let o = bin(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("v_sparsity:"));
    assert!(std::fs::read_to_string(&report)
        .unwrap()
        .contains("objective_trace"));

    let o = bin(&[
        "predict",
        "--model",
        s(&model),
        "--user",
        "3",
        "--item",
        "5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let printed = stdout(&o);
    let value: f64 = printed.trim().parse().unwrap();
    assert!((1.0..=5.0).contains(&value));
    let library = FactorModel::load(&model)
        .unwrap()
        .predict_ids(3, 5)
        .unwrap();
    assert_eq!(printed.trim(), format!("{library:.4}"));

    let o = bin(&[
        "predict",
        "--model",
        s(&model),
        "--user",
        "77",
        "--item",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_UNKNOWN_ID));
    assert!(stderr(&o).contains("77"));

    std::fs::write(&model, b"garbage").unwrap();
    let o = bin(&[
        "predict",
        "--model",
        s(&model),
        "--user",
        "3",
        "--item",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_FORMAT));
}

#[test]
fn dense_training_has_no_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_file(dir.path());
    let model = dir.path().join("d.bcs");
    let mut args = vec![
        "train",
        "--dataset",
        s(&data),
        "--model",
        s(&model),
        "--variant",
        "dense",
    ];
    args.extend(SMALL);
    let o = bin(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("v_sparsity: 0.0000"));
}

#[test]
fn zero_iterations_keep_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_file(dir.path());
    let model = dir.path().join("z.bcs");
    let o = bin(&[
        "train",
        "--dataset",
        s(&data),
        "--model",
        s(&model),
        "--rank",
        "2",
        "--max-iters",
        "0",
        "--seed",
        "4",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("converged: false"));
    let m = FactorModel::load(&model).unwrap();
    let init = init_factors(
        10,
        12,
        &SolverConfig {
            rank: 2,
            seed: 4,
            max_outer_iters: 0,
            ..Default::default()
        },
    );
    assert_eq!(m.u, init.u);
    assert_eq!(m.v, init.v);
}

#[test]
fn cross_validate_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_file(dir.path());
    let out = dir.path().join("cv.toml");
    let mut args = vec![
        "cross-validate",
        "--dataset",
        s(&data),
        "--folds",
        "3",
        "--repeats",
        "1",
        "--out",
        s(&out),
    ];
    args.extend(SMALL);
    let o = bin(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = ExperimentResult::from_toml(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.per_fold.len(), 3);
    assert_eq!(report.config.rank, 2);
    assert!(stdout(&o).contains("mean"));

    let o = bin(&["cross-validate", "--dataset", s(&data), "--folds", "1"]);
    assert_eq!(o.status.code(), Some(EXIT_ARGUMENT));
    assert!(stderr(&o).contains("--folds"));
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_file(dir.path());
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "rank = 2\nlambda_u = 1.0\nmax_iters = 10\nfolds = 2\nrepeats = 1\n",
    )
    .unwrap();
    let out = dir.path().join("cv.toml");
    let o = bin(&[
        "cross-validate",
        "--dataset",
        s(&data),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--folds",
        "4",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = ExperimentResult::from_toml(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.n_folds, 4);
    assert_eq!(report.config.rank, 2);
    assert_eq!(report.config.max_outer_iters, 10);

    std::fs::write(&cfg, "rank = \"two\"\n").unwrap();
    let o = bin(&["cross-validate", "--dataset", s(&data), "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(EXIT_FORMAT));
}

#[test]
fn compare_uses_identical_folds() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_file(dir.path());
    let out = dir.path().join("cmp.toml");
    let mut args = vec![
        "compare",
        "--dataset",
        s(&data),
        "--folds",
        "2",
        "--repeats",
        "1",
        "--out",
        s(&out),
    ];
    args.extend(SMALL);
    let o = bin(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("same folds: yes"));
    assert!(text.contains("reference (published, not measured here)"));
    let report = std::fs::read_to_string(&out).unwrap();
    assert!(report.contains("same_folds = true"));
    assert!(report.contains("[[reference]]"));
}
