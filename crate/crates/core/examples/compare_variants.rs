//! Sparse (l1) against dense (ridge) item factors on identical folds, next
//! to the published reference figures.
//!
//! cargo run --release --example compare_variants -- [path] [folds] [repeats]

use bcs_cf::dataset::{parse_movielens, Format};
use bcs_cf::eval::{run_comparison, CvConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "data/ml-100k/u.data".into());
    let n_folds = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let repeats = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);

    let ds = parse_movielens(&path, Format::Tab100k)?;
    let cfg = CvConfig {
        n_folds,
        repeats,
        ..Default::default()
    };
    let cmp = run_comparison(&ds, &path, &cfg)?;
    print!("{}", cmp.table());
    Ok(())
}
