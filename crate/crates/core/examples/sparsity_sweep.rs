//! Fraction of exactly-zero item factors as the l1 weight grows.
//!
//! Trains on the first of five folds for each lambda_v, with and without
//! early stopping, and prints the zero fraction of V and the test MAE.
//!
//! cargo run --release --example sparsity_sweep -- [path]

use bcs_cf::dataset::{make_folds, parse_movielens, split, Format};
use bcs_cf::eval::{score, sparsity_report, train_model, EarlyStopping};
use bcs_cf::{BaselineConfig, SolverConfig, Variant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "data/ml-100k/u.data".into());
    let ds = parse_movielens(&path, Format::Tab100k)?;
    let plan = make_folds(&ds, 5, 0)?;
    let sp = split(&ds, &plan, 0)?;
    let early = EarlyStopping::default();

    println!(
        "{:>8} {:>8} {:>7} {:>9} {:>8}",
        "variant", "lambda_v", "stop", "V zeros", "MAE"
    );
    for (variant, lambda_v) in [
        (Variant::Bcs, 1e-2),
        (Variant::Bcs, 1e-1),
        (Variant::Bcs, 1.0),
        (Variant::Dense, 1e-1),
    ] {
        for es in [Some(&early), None] {
            let solver = SolverConfig {
                lambda_v,
                variant,
                ..Default::default()
            };
            let t = train_model(
                &ds,
                &sp.train,
                &solver,
                &BaselineConfig::default(),
                es,
                true,
            )?;
            println!(
                "{:>8} {:>8.0e} {:>7} {:>9.4} {:>8.4}",
                variant.to_string(),
                lambda_v,
                t.report.iterations_run,
                sparsity_report(&t.model).v_zero_fraction,
                score(&t.model, &sp, true)?
            );
        }
    }
    Ok(())
}
