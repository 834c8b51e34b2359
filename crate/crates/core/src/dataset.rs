//! MovieLens ingestion, dense re-indexing and k-fold splitting.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::MaskedMatrix;

pub const MIN_RATING: f64 = 1.0;
pub const MAX_RATING: f64 = 5.0;

/// One line of a ratings file, with the ids exactly as they appear there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user_id: u32,
    pub item_id: u32,
    pub rating: f64,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// `user<TAB>item<TAB>rating<TAB>timestamp` (MovieLens 100K `u.data`).
    #[serde(rename = "100k")]
    Tab100k,
    /// `user::item::rating::timestamp` (MovieLens 1M `ratings.dat`).
    #[serde(rename = "1m")]
    Colon1m,
}

impl Format {
    fn separator(self) -> &'static str {
        match self {
            Format::Tab100k => "\t",
            Format::Colon1m => "::",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Format::Tab100k => "100k",
            Format::Colon1m => "1m",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "100k" | "tab" | "tab_100k" => Ok(Format::Tab100k),
            "1m" | "colon" | "colon_1m" => Ok(Format::Colon1m),
            other => Err(Error::Argument(format!(
                "unknown dataset format {other:?} (expected 100k or 1m)"
            ))),
        }
    }
}

/// An immutable set of ratings with contiguous user and item indices.
///
/// Users and items are numbered `0..num_users()` / `0..num_items()` in order
/// of first appearance.
#[derive(Debug, Clone)]
pub struct RatingsDataset {
    records: Vec<RatingRecord>,
    cells: Vec<(usize, usize)>,
    user_index: HashMap<u32, usize>,
    item_index: HashMap<u32, usize>,
    user_ids: Vec<u32>,
    item_ids: Vec<u32>,
}

impl RatingsDataset {
    /// Validates the records and assigns dense indices.
    pub fn from_records(records: Vec<RatingRecord>) -> Result<Self> {
        let mut user_index = HashMap::new();
        let mut item_index = HashMap::new();
        let mut user_ids = Vec::new();
        let mut item_ids = Vec::new();
        let mut cells = Vec::with_capacity(records.len());
        let mut seen = HashMap::with_capacity(records.len());

        for (pos, rec) in records.iter().enumerate() {
            validate_record(rec)
                .map_err(|msg| Error::Validation(format!("record {}: {msg}", pos + 1)))?;
            let u = *user_index.entry(rec.user_id).or_insert_with(|| {
                user_ids.push(rec.user_id);
                user_ids.len() - 1
            });
            let i = *item_index.entry(rec.item_id).or_insert_with(|| {
                item_ids.push(rec.item_id);
                item_ids.len() - 1
            });
            if let Some(first) = seen.insert((u, i), pos) {
                return Err(Error::Validation(format!(
                    "record {}: duplicate rating of item {} by user {} (first at record {})",
                    pos + 1,
                    rec.item_id,
                    rec.user_id,
                    first + 1
                )));
            }
            cells.push((u, i));
        }

        Ok(RatingsDataset {
            records,
            cells,
            user_index,
            item_index,
            user_ids,
            item_ids,
        })
    }

    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn density(&self) -> f64 {
        self.len() as f64 / (self.num_users() as f64 * self.num_items() as f64)
    }

    /// Dense `(user, item)` indices of record `pos`.
    pub fn cell(&self, pos: usize) -> (usize, usize) {
        self.cells[pos]
    }

    pub fn user_index(&self, user_id: u32) -> Option<usize> {
        self.user_index.get(&user_id).copied()
    }

    pub fn item_index(&self, item_id: u32) -> Option<usize> {
        self.item_index.get(&item_id).copied()
    }

    /// Original ids by dense index.
    pub fn user_ids(&self) -> &[u32] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[u32] {
        &self.item_ids
    }

    /// Counts of ratings 1 through 5 (rounded to the nearest star).
    pub fn rating_histogram(&self) -> [usize; 5] {
        let mut hist = [0usize; 5];
        for r in &self.records {
            let star = (r.rating.round() as usize).clamp(1, 5);
            hist[star - 1] += 1;
        }
        hist
    }

    /// All ratings as one masked matrix over the full index space.
    pub fn to_masked(&self) -> MaskedMatrix {
        self.masked_subset(|_| true)
    }

    fn masked_subset(&self, keep: impl Fn(usize) -> bool) -> MaskedMatrix {
        let entries = (0..self.len())
            .filter(|&pos| keep(pos))
            .map(|pos| {
                let (u, i) = self.cells[pos];
                (u, i, self.records[pos].rating)
            })
            .collect();
        MaskedMatrix::new(self.num_users(), self.num_items(), entries)
            .expect("dataset cells are unique and in range")
    }
}

fn validate_record(rec: &RatingRecord) -> std::result::Result<(), String> {
    if rec.user_id == 0 || rec.item_id == 0 {
        return Err(format!(
            "ids must be >= 1 (user {}, item {})",
            rec.user_id, rec.item_id
        ));
    }
    if !(MIN_RATING..=MAX_RATING).contains(&rec.rating) {
        return Err(format!(
            "rating {} outside [{MIN_RATING}, {MAX_RATING}]",
            rec.rating
        ));
    }
    Ok(())
}

/// Reads a MovieLens ratings file.
///
/// Records keep file order; blank lines are ignored. A malformed line is a
/// [`Error::Parse`] carrying its 1-based line number; out-of-range ratings
/// and repeated `(user, item)` pairs are [`Error::Validation`].
pub fn parse_movielens(path: impl AsRef<Path>, format: Format) -> Result<RatingsDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = parse_records(&text, format, path)?;
    if records.is_empty() {
        return Err(Error::Validation(format!(
            "{} contains no ratings",
            path.display()
        )));
    }
    RatingsDataset::from_records(records).map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_records(text: &str, format: Format, path: &Path) -> Result<Vec<RatingRecord>> {
    let sep = format.separator();
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split(sep).collect();
        if fields.len() != 4 {
            return Err(parse_err(format!(
                "expected 4 fields separated by {sep:?}, found {}",
                fields.len()
            )));
        }
        let user_id: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad user id {:?}", fields[0])))?;
        let item_id: u32 = fields[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad item id {:?}", fields[1])))?;
        let rating: i64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad rating {:?}", fields[2])))?;
        let timestamp: i64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad timestamp {:?}", fields[3])))?;
        let rec = RatingRecord {
            user_id,
            item_id,
            rating: rating as f64,
            timestamp,
        };
        validate_record(&rec)
            .map_err(|msg| Error::Validation(format!("{}:{line_no}: {msg}", path.display())))?;
        records.push(rec);
    }
    Ok(records)
}

/// Assignment of every record to one of `n_folds` near-equal blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    n_folds: usize,
    seed: u64,
    assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fold label of every record, in record order.
    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    /// FNV-1a digest of the assignments, for checking that two runs used the
    /// same folds.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &a in &self.assignments {
            for b in (a as u64).to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// Shuffles the records with a seeded generator and cuts the permutation
/// into `n_folds` blocks; the first `len % n_folds` blocks get one extra
/// record.
pub fn make_folds(ds: &RatingsDataset, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 folds, got {n_folds}"
        )));
    }
    if n_folds > ds.len() {
        return Err(Error::Argument(format!(
            "{n_folds} folds requested for {} records",
            ds.len()
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let base = ds.len() / n_folds;
    let extra = ds.len() % n_folds;
    let mut assignments = vec![0; ds.len()];
    let mut start = 0;
    for fold in 0..n_folds {
        let size = base + usize::from(fold < extra);
        for &pos in &order[start..start + size] {
            assignments[pos] = fold;
        }
        start += size;
    }
    Ok(FoldPlan {
        n_folds,
        seed,
        assignments,
    })
}

/// A held-out rating with its dense indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestRating {
    pub record: RatingRecord,
    pub user: usize,
    pub item: usize,
}

#[derive(Debug, Clone)]
pub struct Split {
    /// Training ratings over the full `num_users × num_items` index space.
    pub train: MaskedMatrix,
    /// Held-out ratings, in record order.
    pub test: Vec<TestRating>,
}

pub fn split(ds: &RatingsDataset, plan: &FoldPlan, test_fold: usize) -> Result<Split> {
    if test_fold >= plan.n_folds {
        return Err(Error::Argument(format!(
            "test fold {test_fold} out of range for {} folds",
            plan.n_folds
        )));
    }
    if plan.assignments.len() != ds.len() {
        return Err(Error::Argument(format!(
            "fold plan covers {} records, dataset has {}",
            plan.assignments.len(),
            ds.len()
        )));
    }
    let in_test = |pos: usize| plan.assignments[pos] == test_fold;
    let train = ds.masked_subset(|pos| !in_test(pos));
    let test = (0..ds.len())
        .filter(|&pos| in_test(pos))
        .map(|pos| {
            let (user, item) = ds.cells[pos];
            TestRating {
                record: ds.records[pos],
                user,
                item,
            }
        })
        .collect();
    Ok(Split { train, test })
}
