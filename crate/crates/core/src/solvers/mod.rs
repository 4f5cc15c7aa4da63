//! Convex solvers for block-sparse recovery and regression.
//!
//! * [`l21_basis_pursuit`] / [`l1_basis_pursuit`]: `min ‖β‖_{2,1}` (or `‖β‖₁`)
//!   subject to `Φβ = y`, by ADMM with an exact projection onto the affine set.
//! * [`lasso`] / [`group_lasso`]: `½‖y − Φβ‖₂² + 2λσ‖β‖₁` and
//!   `½‖y − Φβ‖₂² + 2λσ√m ‖β‖_{2,1}`, by accelerated proximal gradient with
//!   objective-based momentum restarts.
//!
//! Every solve is single-threaded and deterministic.

mod admm;
mod fista;

pub use admm::{l1_basis_pursuit, l21_basis_pursuit};
pub use fista::{group_lasso, lasso, penalized_least_squares};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::linalg::select_columns;
use crate::metrics::Dictionary;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    FixedLipschitz,
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub admm_rho: f64,
    pub step_rule: StepRule,
    pub debias: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 20_000,
            abs_tol: 1e-8,
            rel_tol: 1e-6,
            admm_rho: 1.0,
            step_rule: StepRule::FixedLipschitz,
            debias: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::input("max_iters must be at least 1"));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0 && self.admm_rho > 0.0) {
            return Err(Error::input("tolerances and rho must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult<T: Real> {
    pub beta_hat: DVector<T>,
    /// The penalized estimate before the least-squares refit, when debiasing ran.
    pub pre_debias: Option<DVector<T>>,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub kkt_residual: f64,
    pub objective: f64,
    pub warnings: Vec<String>,
}

impl<T: Real> SolverResult<T> {
    /// The optimizer of the convex program itself (ignoring any debiasing).
    pub fn penalized_estimate(&self) -> &DVector<T> {
        self.pre_debias.as_ref().unwrap_or(&self.beta_hat)
    }

    pub fn diagnostics(&self) -> SolverDiagnostics {
        SolverDiagnostics {
            iterations: self.iterations,
            converged: self.converged,
            primal_residual: self.primal_residual,
            dual_residual: self.dual_residual,
            kkt_residual: self.kkt_residual,
            objective: self.objective,
            debiased: self.pre_debias.is_some(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Serializable summary of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub kkt_residual: f64,
    pub objective: f64,
    pub debiased: bool,
    pub warnings: Vec<String>,
}

/// Thresholds for deciding which blocks of an estimate are nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportThresholds {
    pub abs: f64,
    pub rel: f64,
}

impl Default for SupportThresholds {
    fn default() -> Self {
        SupportThresholds { abs: 1e-6, rel: 1e-4 }
    }
}

fn check_blocks(len: usize, m: usize) -> Result<()> {
    if m == 0 || len % m != 0 {
        return Err(Error::input(format!("length {len} is not divisible by block size {m}")));
    }
    Ok(())
}

pub(crate) fn block_norms<T: Real>(v: &[T], m: usize) -> impl Iterator<Item = T> + '_ {
    v.chunks(m).map(|c| c.iter().fold(T::zero(), |a, x| a + *x * *x).sqrt())
}

/// `‖v‖_{2,1}`: sum of block ℓ2 norms.
pub fn norm_21<T: Real>(v: &DVector<T>, m: usize) -> T {
    block_norms(v.as_slice(), m).fold(T::zero(), |a, x| a + x)
}

/// `‖v‖_{2,∞}`: largest block ℓ2 norm.
pub fn norm_2inf<T: Real>(v: &DVector<T>, m: usize) -> T {
    block_norms(v.as_slice(), m).fold(T::zero(), |a, x| a.max(x))
}

pub(crate) fn block_shrink_in_place<T: Real>(v: &mut [T], m: usize, theta: T) {
    for block in v.chunks_mut(m) {
        let norm = block.iter().fold(T::zero(), |a, x| a + *x * *x).sqrt();
        if norm <= theta {
            block.iter_mut().for_each(|x| *x = T::zero());
        } else {
            let scale = T::one() - theta / norm;
            block.iter_mut().for_each(|x| *x *= scale);
        }
    }
}

/// Proximal operator of `θ‖·‖_{2,1}`: `v_i ↦ max(0, 1 − θ/‖v_i‖₂) v_i` per block.
pub fn block_soft_threshold<T: Real>(v: &DVector<T>, m: usize, theta: T) -> Result<DVector<T>> {
    check_blocks(v.len(), m)?;
    if !(theta >= T::zero()) {
        return Err(Error::input("threshold must be non-negative"));
    }
    let mut out = v.clone();
    block_shrink_in_place(out.as_mut_slice(), m, theta);
    Ok(out)
}

/// Elementwise soft threshold, the `m = 1` case of [`block_soft_threshold`].
pub fn soft_threshold<T: Real>(v: &DVector<T>, theta: T) -> Result<DVector<T>> {
    block_soft_threshold(v, 1, theta)
}

/// Blocks with `‖β̂_i‖₂ > abs + rel · max_j ‖β̂_j‖₂`, ascending.
pub fn detect_block_support<T: Real>(beta_hat: &DVector<T>, m: usize, thresholds: SupportThresholds) -> Vec<usize> {
    if m == 0 || beta_hat.len() % m != 0 {
        return Vec::new();
    }
    let norms: Vec<f64> = block_norms(beta_hat.as_slice(), m).map(|x| x.as_f64()).collect();
    let top = norms.iter().copied().fold(0.0, f64::max);
    let cut = thresholds.abs + thresholds.rel * top;
    norms
        .iter()
        .enumerate()
        .filter(|(_, n)| **n > cut)
        .map(|(i, _)| i)
        .collect()
}

/// Relative cutoff on singular values when deciding a support submatrix is rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Least-squares refit on the given blocks; zeros elsewhere.
pub fn debias<T: Real>(d: &Dictionary<T>, y: &DVector<T>, support: &[usize]) -> Result<DVector<T>> {
    if y.len() != d.n() {
        return Err(Error::input(format!("observation length {} != n = {}", y.len(), d.n())));
    }
    let mut beta = DVector::zeros(d.p());
    if support.is_empty() {
        return Ok(beta);
    }
    let cols = d.block_columns(support);
    if cols.len() > d.n() {
        return Err(Error::RankDeficient {
            support: support.to_vec(),
        });
    }
    let x = select_columns(d.entries(), &cols);
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > T::lit(RANK_TOL) * smax) {
        return Err(Error::RankDeficient {
            support: support.to_vec(),
        });
    }
    let coef = svd
        .solve(y, T::zero())
        .map_err(|e| Error::input(format!("least-squares refit failed: {e}")))?;
    for (c, v) in cols.iter().zip(coef.iter()) {
        beta[*c] = *v;
    }
    Ok(beta)
}
