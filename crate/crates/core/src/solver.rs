//! Alternating majorization-minimization for
//!
//! ```text
//! min_{U,V} ‖Y − A(UV)‖² + λ_u ‖U‖_F² + λ_v ‖vec(V)‖₁
//! ```
//!
//! with a dense user matrix `U` (M×k) and a sparse item matrix `V` (k×N).
//!
//! Each outer iteration lands on `Z = UV + Aᵀ(Y − A(UV))` (the observed
//! residuals patched into the current product), solves the ridge problem
//! for `U` exactly, lands again on `W` with the new `U`, and takes
//! soft-thresholding steps for `V`. Because `A` samples entries, `AᵀA` is a
//! projection and the landing step size is 1.
//!
//! The landing matrices are never formed. With `R` the masked residual,
//! `ZVᵀ = U(VVᵀ) + RVᵀ` and `Uᵀ(W − UV') = UᵀU(V − V') + UᵀR`, so an
//! iteration costs `O(|Ω|k + (M+N)k²)`.
//!
//! The dense variant replaces the soft-thresholding step by the ridge
//! minimizer in `V`, which is the classical Frobenius-regularized
//! factorization.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    masked_residual, soft_threshold, solve_spd, spectral_norm_sq, DenseMatrix, MaskedMatrix,
    SAMPLING_OPERATOR_NORM_SQ,
};

/// Safety margin on the Lipschitz bound used as the ISTA step size.
pub const LIPSCHITZ_MARGIN: f64 = 1.01;

const POWER_ITER_TOL: f64 = 1e-10;
const POWER_ITER_MAX: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// l1-regularized (sparse) item factors.
    Bcs,
    /// Frobenius-regularized (dense) item factors.
    Dense,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Bcs => "bcs",
            Variant::Dense => "dense",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bcs" => Ok(Variant::Bcs),
            "dense" => Ok(Variant::Dense),
            other => Err(Error::Argument(format!(
                "unknown variant {other:?} (expected bcs or dense)"
            ))),
        }
    }
}

/// Scale of the uniform random initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScale {
    /// Entries uniform on `[0, 1)`.
    #[default]
    Unit,
    /// Entries uniform on `[0, 1/√k)`, so initial products are `O(1)`.
    ///
    /// With a heavy `lambda_u` this start can be thresholded to the
    /// stationary point `U = 0, V = 0` within a few iterations.
    InverseSqrtRank,
}

impl FromStr for InitScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unit" => Ok(InitScale::Unit),
            "inv_sqrt_rank" | "inverse_sqrt_rank" => Ok(InitScale::InverseSqrtRank),
            other => Err(Error::Argument(format!(
                "unknown init scale {other:?} (expected unit or inv_sqrt_rank)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rank: usize,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub max_outer_iters: usize,
    /// Relative objective change below which the outer loop stops.
    pub obj_tol: f64,
    /// Soft-thresholding steps per landing of `W`.
    pub inner_v_steps: usize,
    pub seed: u64,
    pub variant: Variant,
    pub init: InitScale,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rank: 50,
            lambda_u: 1e3,
            lambda_v: 1e-1,
            max_outer_iters: 200,
            obj_tol: 1e-7,
            inner_v_steps: 1,
            seed: 0,
            variant: Variant::Bcs,
            init: InitScale::Unit,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Argument(format!(
                    "{name} must be positive and finite, got {x}"
                )))
            }
        };
        if self.rank == 0 {
            return Err(Error::Argument("rank must be at least 1".into()));
        }
        if self.inner_v_steps == 0 {
            return Err(Error::Argument("inner_v_steps must be at least 1".into()));
        }
        positive("lambda_u", self.lambda_u)?;
        positive("lambda_v", self.lambda_v)?;
        positive("obj_tol", self.obj_tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    /// Users × rank.
    pub u: DenseMatrix,
    /// Rank × items.
    pub v: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Objective at the random initialization.
    pub initial_objective: f64,
    /// Objective after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub wall_time_seconds: f64,
    /// Fraction of exactly-zero entries in `V`.
    pub v_sparsity: f64,
}

impl FitReport {
    pub fn final_objective(&self) -> f64 {
        self.objective_trace
            .last()
            .copied()
            .unwrap_or(self.initial_objective)
    }
}

/// Uniform `[0, 1)` entries (times `1/√k` for [`InitScale::InverseSqrtRank`]),
/// drawn for `U` then `V` from a generator seeded with `config.seed`.
pub fn init_factors(num_users: usize, num_items: usize, config: &SolverConfig) -> Factors {
    let k = config.rank;
    let scale = match config.init {
        InitScale::Unit => 1.0,
        InitScale::InverseSqrtRank => 1.0 / (k as f64).sqrt(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |rows, cols| {
        let data = (0..rows * cols)
            .map(|_| rng.random::<f64>() * scale)
            .collect();
        DenseMatrix::from_vec_unchecked(rows, cols, data)
    };
    let u = draw(num_users, k);
    let v = draw(k, num_items);
    Factors { u, v }
}

fn check_shapes(z: &MaskedMatrix, u: &DenseMatrix, v: &DenseMatrix) -> Result<()> {
    if u.rows() != z.rows() || v.cols() != z.cols() || u.cols() != v.rows() {
        return Err(Error::Argument(format!(
            "factors {}x{} · {}x{} do not match {}x{} ratings",
            u.rows(),
            u.cols(),
            v.rows(),
            v.cols(),
            z.rows(),
            z.cols()
        )));
    }
    Ok(())
}

/// Exact minimizer of `‖Z − UV‖_F² + λ_u‖U‖_F²` where `Z` is the landing
/// matrix built from `(u, v)`; solves `U (VVᵀ + λ_u I) = Z Vᵀ`.
pub fn update_u(
    z: &MaskedMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    lambda_u: f64,
) -> Result<DenseMatrix> {
    check_shapes(z, u, v)?;
    let residual = masked_residual(z, u, v)?;
    update_u_from_residual(&residual, u, v, lambda_u)
}

fn update_u_from_residual(
    residual: &MaskedMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    lambda_u: f64,
) -> Result<DenseMatrix> {
    let mut system = v.outer_gram();
    // Z Vᵀ = U (V Vᵀ) + (1/β) R Vᵀ
    let mut rhs = u.matmul(&system)?;
    rhs.add_scaled(
        1.0 / SAMPLING_OPERATOR_NORM_SQ,
        &residual.mul_transposed(v)?,
    )?;
    system.add_diagonal(lambda_u);
    solve_spd(&system, &rhs)
}

/// Gradient of `V ↦ ‖Y − A(UV)‖²`, i.e. `2Uᵀ(Aᵀ(A(UV) − Y))`.
pub fn smooth_gradient_v(
    z: &MaskedMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
) -> Result<DenseMatrix> {
    check_shapes(z, u, v)?;
    let residual = masked_residual(z, u, v)?;
    let mut g = residual.transpose_mul(u)?;
    g.scale(-2.0);
    Ok(g)
}

/// Step-size constant `α = 1.01 · λ_max(UᵀU)` for the soft-thresholding
/// steps.
pub fn ista_step_constant(u: &DenseMatrix) -> Result<f64> {
    let alpha = LIPSCHITZ_MARGIN * spectral_norm_sq(&u.gram(), POWER_ITER_TOL, POWER_ITER_MAX)?;
    if alpha == 0.0 {
        return Err(Error::Numerical(
            "user factors are identically zero (max eig of UᵀU is 0); re-initialize with another seed or a smaller lambda_u"
                .into(),
        ));
    }
    Ok(alpha)
}

/// Soft-thresholding update of `V` for the sub-problem
/// `‖W − UV‖² + λ_v‖vec(V)‖₁`, with `W` landed at `(u, v)`.
///
/// Runs `inner_steps` iterations of
/// `V ← soft(V + Uᵀ(W − UV)/α, λ_v/(2α))`.
pub fn update_v(
    z: &MaskedMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    lambda_v: f64,
    inner_steps: usize,
) -> Result<DenseMatrix> {
    check_shapes(z, u, v)?;
    let residual = masked_residual(z, u, v)?;
    update_v_from_residual(&residual, u, v, lambda_v, inner_steps)
}

fn update_v_from_residual(
    residual: &MaskedMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    lambda_v: f64,
    inner_steps: usize,
) -> Result<DenseMatrix> {
    let alpha = ista_step_constant(u)?;
    let gram = u.gram();
    // Uᵀ(W − UV_k) = (1/β) UᵀR
    let mut landed_grad = residual.transpose_mul(u)?;
    landed_grad.scale(1.0 / SAMPLING_OPERATOR_NORM_SQ);
    let threshold = lambda_v / (2.0 * alpha);

    let mut current = v.clone();
    for step in 0..inner_steps {
        // Uᵀ(W − U·current) = UᵀU(V_k − current) + Uᵀ(W − UV_k)
        let mut direction = landed_grad.clone();
        if step > 0 {
            direction.add_scaled(1.0, &gram.matmul(&v.sub(&current)?)?)?;
        }
        let mut t = current;
        t.add_scaled(1.0 / alpha, &direction)?;
        current = soft_threshold(&t, threshold)?;
    }
    Ok(current)
}

/// Ridge update of `V` for the dense variant: `(UᵀU + λ_v I) V = UᵀW`.
pub fn update_v_dense(
    z: &MaskedMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    lambda_v: f64,
) -> Result<DenseMatrix> {
    check_shapes(z, u, v)?;
    let residual = masked_residual(z, u, v)?;
    update_v_dense_from_residual(&residual, u, v, lambda_v)
}

fn update_v_dense_from_residual(
    residual: &MaskedMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    lambda_v: f64,
) -> Result<DenseMatrix> {
    let mut system = u.gram();
    // UᵀW = UᵀU V + (1/β) UᵀR
    let mut rhs = system.matmul(v)?;
    rhs.add_scaled(1.0 / SAMPLING_OPERATOR_NORM_SQ, &residual.transpose_mul(u)?)?;
    system.add_diagonal(lambda_v);
    Ok(solve_spd(&system, &rhs.transpose())?.transpose())
}

/// `‖Y − A(UV)‖² + λ_u‖U‖_F² + λ_v‖vec(V)‖₁`.
pub fn objective(
    z: &MaskedMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    lambda_u: f64,
    lambda_v: f64,
) -> Result<f64> {
    check_shapes(z, u, v)?;
    let residual = masked_residual(z, u, v)?;
    Ok(objective_from_residual(
        &residual,
        u,
        v,
        lambda_u,
        lambda_v,
        Variant::Bcs,
    ))
}

/// `‖Y − A(UV)‖² + λ_u‖U‖_F² + λ_v‖V‖_F²`, the objective of the dense variant.
pub fn objective_dense(
    z: &MaskedMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    lambda_u: f64,
    lambda_v: f64,
) -> Result<f64> {
    check_shapes(z, u, v)?;
    let residual = masked_residual(z, u, v)?;
    Ok(objective_from_residual(
        &residual,
        u,
        v,
        lambda_u,
        lambda_v,
        Variant::Dense,
    ))
}

fn objective_from_residual(
    residual: &MaskedMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
    lambda_u: f64,
    lambda_v: f64,
    variant: Variant,
) -> f64 {
    let v_penalty = match variant {
        Variant::Bcs => v.l1_norm(),
        Variant::Dense => v.frobenius_sq(),
    };
    residual.sum_sq() + lambda_u * u.frobenius_sq() + lambda_v * v_penalty
}

/// Value at `v_new` of the landing surrogate for the `V` sub-problem,
/// `‖W − U v_new‖_F² + λ_v‖vec(v_new)‖₁`, with `W` landed at `(u, v_k)`.
///
/// It majorizes the true sub-problem objective and touches it at `v_new = v_k`.
pub fn landing_surrogate_v(
    z: &MaskedMatrix,
    u: &DenseMatrix,
    v_k: &DenseMatrix,
    v_new: &DenseMatrix,
    lambda_v: f64,
) -> Result<f64> {
    check_shapes(z, u, v_k)?;
    check_shapes(z, u, v_new)?;
    let residual = masked_residual(z, u, v_k)?;
    // W − U v_new = U(v_k − v_new) + Aᵀ(R); expand the square.
    let d = v_k.sub(v_new)?;
    let gram = u.gram();
    let gd = gram.matmul(&d)?;
    let quad: f64 = d
        .as_slice()
        .iter()
        .zip(gd.as_slice())
        .map(|(a, b)| a * b)
        .sum();
    let cross: f64 = residual
        .transpose_mul(u)?
        .as_slice()
        .iter()
        .zip(d.as_slice())
        .map(|(a, b)| a * b)
        .sum();
    Ok(quad + 2.0 * cross + residual.sum_sq() + lambda_v * v_new.l1_norm())
}

/// Value at `v_new` of the quadratic (ISTA) majorizer of the landing
/// surrogate around `v_k` with curvature `α`:
///
/// ```text
/// ‖W − U v_k‖² − 2⟨Uᵀ(W − U v_k), v_new − v_k⟩ + α‖v_new − v_k‖² + λ_v‖v_new‖₁
/// ```
///
/// One soft-thresholding step minimizes it exactly.
pub fn ista_surrogate_v(
    z: &MaskedMatrix,
    u: &DenseMatrix,
    v_k: &DenseMatrix,
    v_new: &DenseMatrix,
    lambda_v: f64,
    alpha: f64,
) -> Result<f64> {
    check_shapes(z, u, v_k)?;
    check_shapes(z, u, v_new)?;
    let residual = masked_residual(z, u, v_k)?;
    let d = v_new.sub(v_k)?;
    let lin: f64 = residual
        .transpose_mul(u)?
        .as_slice()
        .iter()
        .zip(d.as_slice())
        .map(|(a, b)| a * b)
        .sum();
    Ok(residual.sum_sq() - 2.0 * lin + alpha * d.frobenius_sq() + lambda_v * v_new.l1_norm())
}

/// Runs the alternating loop selected by `config.variant`.
///
/// Stops after `max_outer_iters` iterations or once
/// `|f_k − f_{k−1}| ≤ obj_tol · max(1, f_{k−1})`, in which case the report is
/// marked converged. A collapse to `U = 0, V = 0` is a fixed point of the
/// iteration and ends as converged with a baseline-only model.
pub fn fit(z: &MaskedMatrix, config: &SolverConfig) -> Result<(Factors, FitReport)> {
    fit_observed(z, config, |_| IterationControl::Continue)
}

/// State handed to a [`fit_observed`] observer after each outer iteration.
#[derive(Debug)]
pub struct IterationState<'a> {
    /// 1-based outer iteration.
    pub iteration: usize,
    pub objective: f64,
    pub u: &'a DenseMatrix,
    pub v: &'a DenseMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationControl {
    Continue,
    Stop,
}

/// [`fit`] with a callback after every outer iteration; returning
/// [`IterationControl::Stop`] ends the loop (the report is then not marked
/// converged unless the objective test also fired).
pub fn fit_observed(
    z: &MaskedMatrix,
    config: &SolverConfig,
    mut observer: impl FnMut(&IterationState<'_>) -> IterationControl,
) -> Result<(Factors, FitReport)> {
    config.validate()?;
    if z.is_empty() {
        return Err(Error::Argument("no observed entries to factor".into()));
    }
    let start = Instant::now();
    let Factors { mut u, mut v } = init_factors(z.rows(), z.cols(), config);

    let mut residual = masked_residual(z, &u, &v)?;
    let initial_objective = objective_from_residual(
        &residual,
        &u,
        &v,
        config.lambda_u,
        config.lambda_v,
        config.variant,
    );
    let mut previous = initial_objective;
    let mut trace = Vec::with_capacity(config.max_outer_iters.min(10_000));
    let mut converged = false;

    for iter in 1..=config.max_outer_iters {
        u = update_u_from_residual(&residual, &u, &v, config.lambda_u)?;
        let landed = masked_residual(z, &u, &v)?;
        v = match config.variant {
            // With U ≡ 0 the V sub-problem reduces to λ_v‖V‖₁, minimized by 0.
            Variant::Bcs if u.max_abs() == 0.0 => DenseMatrix::zeros(v.rows(), v.cols()),
            Variant::Bcs => {
                update_v_from_residual(&landed, &u, &v, config.lambda_v, config.inner_v_steps)?
            }
            Variant::Dense => update_v_dense_from_residual(&landed, &u, &v, config.lambda_v)?,
        };
        residual = masked_residual(z, &u, &v)?;
        let obj = objective_from_residual(
            &residual,
            &u,
            &v,
            config.lambda_u,
            config.lambda_v,
            config.variant,
        );
        if !obj.is_finite() {
            return Err(Error::Numerical(format!(
                "objective became non-finite at iteration {iter}"
            )));
        }
        trace.push(obj);
        let control = observer(&IterationState {
            iteration: iter,
            objective: obj,
            u: &u,
            v: &v,
        });
        if (previous - obj).abs() <= config.obj_tol * previous.max(1.0) {
            converged = true;
            break;
        }
        if control == IterationControl::Stop {
            break;
        }
        previous = obj;
    }

    let report = FitReport {
        initial_objective,
        iterations_run: trace.len(),
        objective_trace: trace,
        converged,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        v_sparsity: v.count_exact_zeros() as f64 / (v.rows() * v.cols()) as f64,
    };
    Ok((Factors { u, v }, report))
}

/// [`fit`] with the dense (Frobenius-regularized) item update.
pub fn fit_dense(z: &MaskedMatrix, config: &SolverConfig) -> Result<(Factors, FitReport)> {
    let config = SolverConfig {
        variant: Variant::Dense,
        ..*config
    };
    fit(z, &config)
}
