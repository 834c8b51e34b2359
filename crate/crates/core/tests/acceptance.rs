//! Acceptance checks, one line per criterion.
//!
//! MovieLens files are looked up in `ML100K_PATH` / `ML1M_PATH`, falling back
//! to `data/ml-100k/u.data` and `data/ml-1m/ratings.dat` under the workspace
//! root. Checks that need a missing file print SKIP.

use std::path::PathBuf;
use std::process::ExitCode;

use bcs_cf::baseline::{fit_baseline, interaction_residuals};
use bcs_cf::dataset::{make_folds, parse_movielens, split, Format, RatingsDataset, Split};
use bcs_cf::eval::{run_cross_validation, CvConfig, ExperimentResult};
use bcs_cf::linalg::{masked_residual, soft};
use bcs_cf::solver::{fit, smooth_gradient_v, update_u, FitReport};
use bcs_cf::{BaselineConfig, DenseMatrix, MaskedMatrix, SolverConfig, Variant};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn report(&mut self, id: &str, name: &str, outcome: Outcome) {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                self.failures += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {id:>3} {name}: {detail}");
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn data_path(var: &str, relative: &str) -> Option<PathBuf> {
    let path = std::env::var_os(var).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("../..")
            .join(relative)
    });
    path.is_file().then_some(path)
}

fn cv(
    ds: &RatingsDataset,
    n_folds: usize,
    repeats: usize,
    solver: SolverConfig,
) -> ExperimentResult {
    let cfg = CvConfig {
        solver,
        n_folds,
        repeats,
        ..Default::default()
    };
    run_cross_validation(ds, "ml-100k", &cfg).expect("cross-validation runs")
}

/// Mean over folds of the first repeat's MAE.
fn first_repeat_mae(r: &ExperimentResult) -> f64 {
    r.per_fold.iter().map(|f| f.repeat_maes[0]).sum::<f64>() / r.per_fold.len() as f64
}

fn fold0_residuals(ds: &RatingsDataset) -> MaskedMatrix {
    let plan = make_folds(ds, 5, 0).unwrap();
    let Split { train, .. } = split(ds, &plan, 0).unwrap();
    let b = BaselineConfig::default();
    let bl = fit_baseline(&train, b.delta, b.tol, b.max_sweeps).unwrap();
    interaction_residuals(&train, &bl).unwrap()
}

fn sparsity(z: &MaskedMatrix, cfg: &SolverConfig) -> (f64, FitReport) {
    let (_, report) = fit(z, cfg).unwrap();
    (report.v_sparsity, report)
}

fn movielens_100k(suite: &mut Suite) {
    let names = [
        ("1", "MAE reproduction (100K)"),
        ("2", "MAE trend across folds (100K)"),
        ("4", "runtime per fold (100K)"),
        ("5", "MM descent on 100K fold 0"),
        ("9", "sparsity of V (100K)"),
        ("11", "determinism"),
    ];
    let Some(path) = data_path("ML100K_PATH", "data/ml-100k/u.data") else {
        for (id, name) in names {
            suite.report(
                id,
                name,
                Outcome::Skip("MovieLens 100K file not found".into()),
            );
        }
        return;
    };
    let ds = parse_movielens(&path, Format::Tab100k).expect("100K parses");
    let defaults = SolverConfig::default();

    let five = cv(&ds, 5, 3, defaults);
    suite.report(
        "1",
        names[0].1,
        check(
            five.mean_mae <= 0.76,
            format!(
                "mean 5-fold MAE over 3 seeds {:.4} (gate <= 0.76, published 0.7215)",
                five.mean_mae
            ),
        ),
    );

    let three = cv(&ds, 3, 1, defaults);
    let ten = cv(&ds, 10, 1, defaults);
    let (m3, m5, m10) = (
        first_repeat_mae(&three),
        first_repeat_mae(&five),
        first_repeat_mae(&ten),
    );
    suite.report(
        "2",
        names[1].1,
        check(
            m3 >= m5 - 0.01 && m5 >= m10 - 0.01,
            format!(
                "3/5/10-fold MAE {m3:.4} / {m5:.4} / {m10:.4} (published 0.7417 / 0.7215 / 0.7140)"
            ),
        ),
    );

    let slowest = five
        .per_fold
        .iter()
        .map(|f| f.train_seconds)
        .fold(0.0, f64::max);
    suite.report(
        "4",
        names[2].1,
        check(
            slowest <= 60.0,
            format!(
                "slowest fold {slowest:.2} s, 5-fold total {:.2} s (gate 60 s per fold)",
                five.mean_seconds * 5.0
            ),
        ),
    );

    let z = fold0_residuals(&ds);
    let (s_mid, report) = sparsity(&z, &defaults);
    let trace = &report.objective_trace;
    let mut worst_rise = 0.0f64;
    let mut prev = report.initial_objective;
    for &obj in trace {
        worst_rise = worst_rise.max(obj - prev);
        prev = obj;
    }
    suite.report(
        "5",
        names[3].1,
        check(
            trace.len() >= 50 && worst_rise <= 1e-9,
            format!(
                "{} iterations, objective {:.6e} -> {:.6e}, largest rise {:.3e}",
                trace.len(),
                report.initial_objective,
                report.final_objective(),
                worst_rise
            ),
        ),
    );

    let (s_low, _) = sparsity(
        &z,
        &SolverConfig {
            lambda_v: 1e-2,
            ..defaults
        },
    );
    let (s_high, _) = sparsity(
        &z,
        &SolverConfig {
            lambda_v: 1.0,
            ..defaults
        },
    );
    let (s_dense, _) = sparsity(
        &z,
        &SolverConfig {
            variant: Variant::Dense,
            ..defaults
        },
    );
    suite.report(
        "9",
        names[4].1,
        check(
            s_mid > 0.0 && s_low <= s_mid && s_mid <= s_high && s_dense == 0.0,
            format!(
                "zero fraction at lambda_v 1e-2 / 1e-1 / 1: {s_low:.4} / {s_mid:.4} / {s_high:.4}, dense {s_dense:.4}"
            ),
        ),
    );

    let (_, again) = sparsity(&z, &defaults);
    let three_again = cv(&ds, 3, 1, defaults);
    let same_maes = three
        .per_fold
        .iter()
        .zip(&three_again.per_fold)
        .all(|(a, b)| a.repeat_maes == b.repeat_maes && a.iterations == b.iterations);
    suite.report(
        "11",
        names[5].1,
        check(
            again.objective_trace == report.objective_trace && same_maes,
            format!(
                "objective trace ({} values) and 3-fold MAEs reproduced bit for bit: {}",
                trace.len(),
                if same_maes { "yes" } else { "no" }
            ),
        ),
    );

    suite.report(
        "1a",
        "baseline-only ablation is worse",
        check(
            five.mean_baseline_mae > five.mean_mae,
            format!(
                "bias-only MAE {:.4} vs full model {:.4} on the same folds",
                five.mean_baseline_mae, five.mean_mae
            ),
        ),
    );

    let dense = cv(
        &ds,
        5,
        1,
        SolverConfig {
            variant: Variant::Dense,
            ..defaults
        },
    );
    let soft_ok = m5 <= dense.mean_mae + 0.02;
    let detail = format!(
        "sparse {m5:.4} vs dense {:.4} (soft check, margin 0.02)",
        dense.mean_mae
    );
    // Reported, not counted as a failure.
    let outcome = if soft_ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Skip(format!("soft check missed: {detail}"))
    };
    suite.report("1b", "sparse vs dense item factors", outcome);
}

fn movielens_1m(suite: &mut Suite) {
    let name = "MAE reproduction (1M)";
    let Some(path) = data_path("ML1M_PATH", "data/ml-1m/ratings.dat") else {
        suite.report(
            "3",
            name,
            Outcome::Skip("MovieLens 1M file not found".into()),
        );
        return;
    };
    let ds = parse_movielens(&path, Format::Colon1m).expect("1M parses");
    let cfg = CvConfig {
        solver: SolverConfig {
            lambda_u: 1e4,
            ..Default::default()
        },
        repeats: 1,
        ..Default::default()
    };
    let r = run_cross_validation(&ds, "ml-1m", &cfg).expect("cross-validation runs");
    suite.report(
        "3",
        name,
        check(
            r.mean_mae <= 0.72,
            format!(
                "mean 5-fold MAE {:.4} (gate <= 0.72, published 0.6762)",
                r.mean_mae
            ),
        ),
    );
}

/// argmin_x ½(x − t)² + s|x| by bracketing the subgradient sign change on a
/// grid and bisecting.
fn prox_by_search(t: f64, s: f64) -> f64 {
    let g = |x: f64| {
        if x == 0.0 {
            if (-s..=s).contains(&t) {
                0.0
            } else {
                -t + s * t.signum()
            }
        } else {
            x - t + s * x.signum()
        }
    };
    if g(0.0) == 0.0 {
        return 0.0;
    }
    let width = t.abs() + s + 1.0;
    let grid: Vec<f64> = (0..=400)
        .map(|i| -width + 2.0 * width * i as f64 / 400.0)
        .collect();
    let j = grid
        .windows(2)
        .position(|w| g(w[0]) <= 0.0 && g(w[1]) >= 0.0)
        .unwrap();
    let (mut a, mut b) = (grid[j], grid[j + 1]);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if g(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn prox_oracle(suite: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let t = rng.random_range(-10.0..10.0);
        let s = rng.random_range(0.0..5.0);
        worst = worst.max((soft(t, s) - prox_by_search(t, s)).abs());
    }
    suite.report(
        "6",
        "prox oracle equivalence",
        check(
            worst <= 1e-9,
            format!("1000 pairs, largest difference {worst:.2e}"),
        ),
    );
}

fn dense(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn na(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}

fn observed_6x4(rng: &mut ChaCha8Rng) -> MaskedMatrix {
    let cells = (0..6)
        .flat_map(|m| (0..4).map(move |n| (m, n)))
        .filter(|&(m, n)| (m + 2 * n) % 3 != 0)
        .map(|(m, n)| (m, n, rng.random_range(-2.0..2.0)))
        .collect();
    MaskedMatrix::new(6, 4, cells).unwrap()
}

fn subproblem_oracles(suite: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let z = observed_6x4(&mut rng);
    let u = dense(&mut rng, 6, 2);
    let v = dense(&mut rng, 2, 4);
    let lambda_u = 0.7;
    let ours = update_u(&z, &u, &v, lambda_u).unwrap();
    let (un, vn) = (na(&u), na(&v));
    let mut w = &un * &vn;
    for (r, c, y) in z.iter() {
        w[(r, c)] = y;
    }
    let chol = (&vn * vn.transpose() + DMatrix::identity(2, 2) * lambda_u)
        .cholesky()
        .unwrap();
    let mut u_err = 0.0f64;
    for m in 0..6 {
        let row = chol.solve(&(&vn * w.row(m).transpose()));
        for f in 0..2 {
            u_err = u_err.max((ours.get(m, f) - row[f]).abs());
        }
    }

    let ratings = [
        (0, 0, 5.0),
        (0, 1, 3.0),
        (1, 1, 4.0),
        (1, 2, 2.0),
        (2, 2, 1.0),
        (2, 3, 4.0),
        (3, 3, 5.0),
        (3, 0, 2.0),
    ];
    let train = MaskedMatrix::new(4, 4, ratings.to_vec()).unwrap();
    let delta = 1e-3;
    let bl = fit_baseline(&train, delta, 1e-14, 100_000).unwrap();
    let mut a = DMatrix::zeros(8, 8);
    let mut y = DVector::zeros(8);
    for (i, &(m, n, r)) in ratings.iter().enumerate() {
        a[(i, m)] = 1.0;
        a[(i, 4 + n)] = 1.0;
        y[i] = r - bl.mu_g;
    }
    let b = (a.transpose() * &a + DMatrix::identity(8, 8) * delta)
        .cholesky()
        .unwrap()
        .solve(&(a.transpose() * y));
    let b_err = bl
        .b_user
        .iter()
        .chain(&bl.b_item)
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    suite.report(
        "7",
        "sub-problem oracles",
        check(
            u_err <= 1e-8 && b_err <= 1e-6,
            format!("U update vs row ridge {u_err:.2e} (<= 1e-8), biases vs normal equations {b_err:.2e} (<= 1e-6)"),
        ),
    );
}

fn gradient_check(suite: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cells = (0..4)
        .flat_map(|m| (0..3).map(move |n| (m, n)))
        .filter(|&(m, n)| (m + n) % 4 != 1)
        .map(|(m, n)| (m, n, rng.random_range(-2.0..2.0)))
        .collect();
    let z = MaskedMatrix::new(4, 3, cells).unwrap();
    let u = dense(&mut rng, 4, 2);
    let v = dense(&mut rng, 2, 3);
    let grad = smooth_gradient_v(&z, &u, &v).unwrap();
    let f = |v: &DenseMatrix| masked_residual(&z, &u, v).unwrap().sum_sq();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for r in 0..2 {
        for c in 0..3 {
            let (mut plus, mut minus) = (v.clone(), v.clone());
            plus.set(r, c, v.get(r, c) + h);
            minus.set(r, c, v.get(r, c) - h);
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            worst = worst.max((grad.get(r, c) - fd).abs() / fd.abs().max(1.0));
        }
    }
    suite.report(
        "8",
        "gradient check",
        check(
            worst <= 1e-4,
            format!("largest relative difference {worst:.2e}"),
        ),
    );
}

fn rank_one(suite: &mut Suite) {
    let a = [1.0, 2.0, 0.5, 1.5, 3.0];
    let b = [2.0, 1.0, 0.5, 1.0, 1.5];
    let cells = (0..5)
        .flat_map(|m| (0..5).map(move |n| (m, n, a[m] * b[n])))
        .collect();
    let z = MaskedMatrix::new(5, 5, cells).unwrap();
    let mut rms = Vec::new();
    for variant in [Variant::Bcs, Variant::Dense] {
        let cfg = SolverConfig {
            rank: 1,
            lambda_u: 1e-8,
            lambda_v: 1e-8,
            max_outer_iters: 2000,
            obj_tol: 1e-14,
            variant,
            ..Default::default()
        };
        let (f, _) = fit(&z, &cfg).unwrap();
        rms.push((masked_residual(&z, &f.u, &f.v).unwrap().sum_sq() / 25.0).sqrt());
    }
    suite.report(
        "10",
        "exact rank-1 recovery",
        check(
            rms.iter().all(|&r| r <= 1e-3),
            format!("residual RMS sparse {:.2e}, dense {:.2e}", rms[0], rms[1]),
        ),
    );
}

fn main() -> ExitCode {
    let mut suite = Suite { failures: 0 };
    prox_oracle(&mut suite);
    subproblem_oracles(&mut suite);
    gradient_check(&mut suite);
    rank_one(&mut suite);
    movielens_100k(&mut suite);
    movielens_1m(&mut suite);
    if suite.failures == 0 {
        println!("acceptance: all checks passed or skipped");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} failed", suite.failures);
        ExitCode::FAILURE
    }
}
