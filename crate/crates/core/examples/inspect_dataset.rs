//! Counts, density and rating histogram of a MovieLens file.
//!
//! cargo run --example inspect_dataset -- [path] [100k|1m]

use bcs_cf::cli::inspect_summary;
use bcs_cf::dataset::{make_folds, parse_movielens, Format};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "data/ml-100k/u.data".into());
    let format: Format = args.next().as_deref().unwrap_or("100k").parse()?;
    let ds = parse_movielens(&path, format)?;
    print!("{}", inspect_summary(&ds));

    let plan = make_folds(&ds, 5, 0)?;
    println!("5-fold sizes: {:?}", plan.fold_sizes());
    Ok(())
}
