//! Fitted models, prediction and the binary model file.
//!
//! # File layout
//!
//! All integers and reals are little-endian.
//!
//! | field | type |
//! |-------|------|
//! | magic `b"BCSCFMDL"` | 8 bytes |
//! | version (= 1) | u8 |
//! | variant (0 = bcs, 1 = dense) | u8 |
//! | init scale (0 = unit, 1 = 1/√k) | u8 |
//! | users `M`, items `N`, rank `k` | 3 × u64 |
//! | lambda_u, lambda_v | 2 × f64 |
//! | max_outer_iters | u64 |
//! | obj_tol | f64 |
//! | inner_v_steps, seed | 2 × u64 |
//! | mu_g, delta | 2 × f64 |
//! | user biases, item biases | M × f64, N × f64 |
//! | `U` row-major, `V` row-major | M·k × f64, k·N × f64 |
//! | original user ids, item ids | M × u32, N × u32 |
//! | user trained flag, item trained flag | M × u8, N × u8 |

use std::fs;
use std::path::Path;

use crate::baseline::BaselineModel;
use crate::dataset::{MAX_RATING, MIN_RATING};
use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix, MaskedMatrix};
use crate::solver::{Factors, InitScale, SolverConfig, Variant};

pub const MODEL_MAGIC: &[u8; 8] = b"BCSCFMDL";
pub const MODEL_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub u: DenseMatrix,
    pub v: DenseMatrix,
    pub baseline: BaselineModel,
    pub config: SolverConfig,
    user_ids: Vec<u32>,
    item_ids: Vec<u32>,
    user_trained: Vec<bool>,
    item_trained: Vec<bool>,
}

impl FactorModel {
    /// Assembles a model. Users and items without any rating in `train` are
    /// marked cold and predicted by the baseline alone.
    pub fn new(
        factors: Factors,
        baseline: BaselineModel,
        config: SolverConfig,
        train: &MaskedMatrix,
        user_ids: Vec<u32>,
        item_ids: Vec<u32>,
    ) -> Result<Self> {
        let Factors { u, v } = factors;
        let (m, n) = (train.rows(), train.cols());
        let consistent = u.rows() == m
            && v.cols() == n
            && u.cols() == v.rows()
            && baseline.num_users() == m
            && baseline.num_items() == n
            && user_ids.len() == m
            && item_ids.len() == n;
        if !consistent {
            return Err(Error::Argument(format!(
                "model parts disagree: U {:?}, V {:?}, baseline {}x{}, ids {}x{}, ratings {m}x{n}",
                u.shape(),
                v.shape(),
                baseline.num_users(),
                baseline.num_items(),
                user_ids.len(),
                item_ids.len()
            )));
        }
        Ok(FactorModel {
            user_trained: (0..m).map(|r| train.row_nnz(r) > 0).collect(),
            item_trained: (0..n).map(|c| train.col_nnz(c) > 0).collect(),
            u,
            v,
            baseline,
            config,
            user_ids,
            item_ids,
        })
    }

    pub fn num_users(&self) -> usize {
        self.u.rows()
    }

    pub fn num_items(&self) -> usize {
        self.v.cols()
    }

    pub fn user_ids(&self) -> &[u32] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[u32] {
        &self.item_ids
    }

    pub fn is_cold(&self, m: usize, n: usize) -> bool {
        !self.user_trained[m] || !self.item_trained[n]
    }

    fn check_cell(&self, m: usize, n: usize) -> Result<()> {
        if m >= self.num_users() || n >= self.num_items() {
            return Err(Error::Argument(format!(
                "cell ({m}, {n}) outside a {}x{} model",
                self.num_users(),
                self.num_items()
            )));
        }
        Ok(())
    }

    /// `μ + b_m + b_n + ⟨U_m, V_n⟩` without clamping; cold cells drop the
    /// factor term.
    pub fn predict_raw(&self, m: usize, n: usize) -> Result<f64> {
        self.check_cell(m, n)?;
        let base = self.baseline.predict_unchecked(m, n);
        if self.is_cold(m, n) {
            return Ok(base);
        }
        let k = self.u.cols();
        let interaction: f64 = self
            .u
            .row(m)
            .iter()
            .enumerate()
            .map(|(f, &x)| x * self.v.get(f, n))
            .fold(0.0, |acc, t| acc + t);
        debug_assert_eq!(k, self.v.rows());
        Ok(base + interaction)
    }

    /// Prediction clamped to the rating scale.
    pub fn predict(&self, m: usize, n: usize) -> Result<f64> {
        Ok(clamp_rating(self.predict_raw(m, n)?))
    }

    /// Prediction addressed by original MovieLens ids.
    pub fn predict_ids(&self, user_id: u32, item_id: u32) -> Result<f64> {
        let m = self
            .user_ids
            .iter()
            .position(|&id| id == user_id)
            .ok_or(Error::UnknownId {
                kind: "user",
                id: user_id,
            })?;
        let n = self
            .item_ids
            .iter()
            .position(|&id| id == item_id)
            .ok_or(Error::UnknownId {
                kind: "item",
                id: item_id,
            })?;
        self.predict(m, n)
    }

    /// Raw predictions for many cells; faster than [`predict_raw`](Self::predict_raw)
    /// in a loop because `V` is transposed once.
    pub fn predict_raw_many(&self, cells: &[(usize, usize)]) -> Result<Vec<f64>> {
        let vt = self.v.transpose();
        cells
            .iter()
            .map(|&(m, n)| {
                self.check_cell(m, n)?;
                let base = self.baseline.predict_unchecked(m, n);
                Ok(if self.is_cold(m, n) {
                    base
                } else {
                    base + dot(self.u.row(m), vt.row(n))
                })
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (m, n, k) = (self.num_users(), self.num_items(), self.u.cols());
        let mut out = Vec::with_capacity(128 + 8 * (m + n) * (k + 2) + 5 * (m + n));
        out.extend_from_slice(MODEL_MAGIC);
        out.push(MODEL_VERSION);
        out.push(match self.config.variant {
            Variant::Bcs => 0,
            Variant::Dense => 1,
        });
        out.push(match self.config.init {
            InitScale::Unit => 0,
            InitScale::InverseSqrtRank => 1,
        });
        for x in [m, n, k] {
            out.extend_from_slice(&(x as u64).to_le_bytes());
        }
        let c = &self.config;
        out.extend_from_slice(&c.lambda_u.to_le_bytes());
        out.extend_from_slice(&c.lambda_v.to_le_bytes());
        out.extend_from_slice(&(c.max_outer_iters as u64).to_le_bytes());
        out.extend_from_slice(&c.obj_tol.to_le_bytes());
        out.extend_from_slice(&(c.inner_v_steps as u64).to_le_bytes());
        out.extend_from_slice(&c.seed.to_le_bytes());
        out.extend_from_slice(&self.baseline.mu_g.to_le_bytes());
        out.extend_from_slice(&self.baseline.delta.to_le_bytes());
        let reals = self
            .baseline
            .b_user
            .iter()
            .chain(&self.baseline.b_item)
            .chain(self.u.as_slice())
            .chain(self.v.as_slice());
        for x in reals {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for id in self.user_ids.iter().chain(&self.item_ids) {
            out.extend_from_slice(&id.to_le_bytes());
        }
        out.extend(
            self.user_trained
                .iter()
                .chain(&self.item_trained)
                .map(|&b| u8::from(b)),
        );
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MODEL_MAGIC {
            return Err("not a model file (bad magic)".into());
        }
        let version = r.u8()?;
        if version != MODEL_VERSION {
            return Err(format!("unsupported model version {version}"));
        }
        let variant = match r.u8()? {
            0 => Variant::Bcs,
            1 => Variant::Dense,
            other => return Err(format!("unknown variant tag {other}")),
        };
        let init = match r.u8()? {
            0 => InitScale::Unit,
            1 => InitScale::InverseSqrtRank,
            other => return Err(format!("unknown init scale tag {other}")),
        };
        let m = r.len()?;
        let n = r.len()?;
        let k = r.len()?;
        let config = SolverConfig {
            rank: k,
            lambda_u: r.f64()?,
            lambda_v: r.f64()?,
            max_outer_iters: r.len()?,
            obj_tol: r.f64()?,
            inner_v_steps: r.len()?,
            seed: r.u64()?,
            variant,
            init,
        };
        let mu_g = r.f64()?;
        let delta = r.f64()?;
        let b_user = r.f64s(m)?;
        let b_item = r.f64s(n)?;
        let u = DenseMatrix::from_vec(m, k, r.f64s(m.checked_mul(k).ok_or("size overflow")?)?)
            .map_err(|e| e.to_string())?;
        let v = DenseMatrix::from_vec(k, n, r.f64s(k.checked_mul(n).ok_or("size overflow")?)?)
            .map_err(|e| e.to_string())?;
        let user_ids = r.u32s(m)?;
        let item_ids = r.u32s(n)?;
        let user_trained = r.flags(m)?;
        let item_trained = r.flags(n)?;
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        Ok(FactorModel {
            u,
            v,
            baseline: BaselineModel {
                mu_g,
                b_user,
                b_item,
                delta,
            },
            config,
            user_ids,
            item_ids,
            user_trained,
            item_trained,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|message| Error::Format {
            path: path.to_path_buf(),
            message,
        })
    }
}

pub fn clamp_rating(x: f64) -> f64 {
    x.clamp(MIN_RATING, MAX_RATING)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(format!("truncated at byte {}", self.pos)),
        }
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> std::result::Result<usize, String> {
        usize::try_from(self.u64()?).map_err(|_| "length overflow".to_string())
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let raw = self.take(n.checked_mul(8).ok_or("size overflow")?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u32s(&mut self, n: usize) -> std::result::Result<Vec<u32>, String> {
        let raw = self.take(n.checked_mul(4).ok_or("size overflow")?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn flags(&mut self, n: usize) -> std::result::Result<Vec<bool>, String> {
        self.take(n)?
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(format!("bad flag byte {other}")),
            })
            .collect()
    }
}
