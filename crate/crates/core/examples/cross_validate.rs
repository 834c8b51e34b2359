//! k-fold cross-validation on a MovieLens file.
//!
//! cargo run --release --example cross_validate -- [path] [folds] [repeats]

use bcs_cf::dataset::{parse_movielens, Format};
use bcs_cf::eval::{run_cross_validation, CvConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "data/ml-100k/u.data".into());
    let n_folds = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let repeats = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);

    let format = if path.ends_with(".dat") {
        Format::Colon1m
    } else {
        Format::Tab100k
    };
    let ds = parse_movielens(&path, format)?;
    let mut cfg = CvConfig {
        n_folds,
        repeats,
        ..Default::default()
    };
    if format == Format::Colon1m {
        cfg.solver.lambda_u = 1e4;
    }
    let result = run_cross_validation(&ds, &path, &cfg)?;
    print!("{}", result.table());
    Ok(())
}
