//! Collaborative filtering by factoring a partially observed ratings matrix
//! into a dense user factor matrix and a sparse item factor matrix.
//!
//! Ratings are first explained by a global mean and per-user / per-item
//! biases ([`baseline`]); the remaining interaction part is factored as
//! `U·V` by alternating majorization-minimization ([`solver`]): an exact
//! ridge solve for `U` and soft-thresholding steps for `V`, which drive
//! many item factors to exactly zero. [`eval`] reproduces k-fold MAE
//! experiments on MovieLens files read by [`dataset`].
//!
//! ```no_run
//! use bcs_cf::{dataset, eval};
//!
//! let ds = dataset::parse_movielens("data/ml-100k/u.data", dataset::Format::Tab100k)?;
//! let result = eval::run_cross_validation(&ds, "ml-100k", &eval::CvConfig::default())?;
//! println!("{}", result.table());
//! # Ok::<(), bcs_cf::Error>(())
//! ```

pub mod baseline;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod solver;

pub use baseline::{BaselineConfig, BaselineModel};
pub use dataset::{Format, RatingRecord, RatingsDataset};
pub use error::{Error, Result};
pub use eval::{CvConfig, ExperimentResult};
pub use linalg::{DenseMatrix, MaskedMatrix};
pub use model::FactorModel;
pub use solver::{FitReport, SolverConfig, Variant};
