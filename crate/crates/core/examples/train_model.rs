//! Train on a whole ratings file, save the model, reload it and predict.
//!
//! cargo run --release --example train_model -- [path] [model file]

use bcs_cf::dataset::{parse_movielens, Format};
use bcs_cf::eval::{sparsity_report, train_model, EarlyStopping};
use bcs_cf::{BaselineConfig, FactorModel, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "data/ml-100k/u.data".into());
    let model_path = args.next().unwrap_or_else(|| "model.bcs".into());

    let ds = parse_movielens(&path, Format::Tab100k)?;
    let train = ds.to_masked();
    let trained = train_model(
        &ds,
        &train,
        &SolverConfig::default(),
        &BaselineConfig::default(),
        Some(&EarlyStopping::default()),
        true,
    )?;
    let report = &trained.report;
    if let Some(sel) = &trained.selection {
        println!(
            "selected {} iterations (holdout MAE {:.4})",
            sel.best_iterations, sel.best_holdout_mae
        );
    }
    println!(
        "objective {:.4e} -> {:.4e} over {} iterations, {:.2} s",
        report.initial_objective,
        report.final_objective(),
        report.iterations_run,
        trained.seconds
    );
    let sparsity = sparsity_report(&trained.model);
    println!("zero fraction of V: {:.4}", sparsity.v_zero_fraction);
    println!(
        "items by number of zero factors: {:?}",
        sparsity.zeros_per_column_histogram
    );

    trained.model.save(&model_path)?;
    let model = FactorModel::load(&model_path)?;
    assert_eq!(model, trained.model);
    let first = ds.records()[0];
    println!(
        "user {} item {}: rated {}, predicted {:.4}",
        first.user_id,
        first.item_id,
        first.rating,
        model.predict_ids(first.user_id, first.item_id)?
    );
    Ok(())
}
