//! Sufficient-condition checkers: the exact-recovery dual certificate for
//! ℓ2,1 minimization and the invertibility / orthogonality / complementary-size
//! conditions behind the lasso and group-lasso error bounds.
//!
//! Every check is sufficient, not necessary. A failed report means the
//! certificate was not established, never that recovery is impossible.
//!
//! The conditions are usually stated for unit noise level. Here every
//! threshold carrying `λ` is multiplied by `σ`, which is the same statement
//! after rescaling `y`, `β` and `z` by `1/σ`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{pseudo_inverse, select_columns};
use crate::metrics::Dictionary;
use crate::solvers::{norm_2inf, RANK_TOL};
use crate::{Error, Real, Result};

/// Tolerance on `‖Φ_S*h − s̄‖₂` for condition (i) of the exact-recovery certificate.
pub const SIGN_RESIDUAL_TOL: f64 = 1e-8;
/// Slack added to the group-lasso optimality threshold.
pub const OPTIMALITY_SLACK: f64 = 1e-6;
/// Bound on `‖(Φ_S*Φ_S)⁻¹‖₂`.
pub const INVERTIBILITY_BOUND: f64 = 2.0;
/// Bound on `Z₀` in the complementary size condition.
pub const Z0_BOUND: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    ExactRecovery,
    Lasso,
    GroupLasso,
}

/// Scalar signs with entrywise maxima, or block directions with block norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertMode {
    Lasso,
    Group,
}

impl CertMode {
    fn kind(self) -> CertificateKind {
        match self {
            CertMode::Lasso => CertificateKind::Lasso,
            CertMode::Group => CertificateKind::GroupLasso,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub kind: CertificateKind,
    pub passed: bool,
    pub details: BTreeMap<String, f64>,
    /// Which component failed, when `passed` is false.
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub passed: bool,
    pub statistic: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplementarySize {
    pub passed: bool,
    pub z0: f64,
    pub z1: f64,
    pub z0_threshold: f64,
    pub z1_threshold: f64,
}

fn check_support<T: Real>(d: &Dictionary<T>, support: &[usize]) -> Result<()> {
    if support.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::input("support must be strictly increasing"));
    }
    if let Some(&b) = support.iter().find(|&&b| b >= d.num_blocks()) {
        return Err(Error::input(format!("support block {b} out of range for {} blocks", d.num_blocks())));
    }
    Ok(())
}

fn check_len<T: Real>(v: &DVector<T>, len: usize, what: &str) -> Result<()> {
    if v.len() != len {
        return Err(Error::input(format!("{what} has length {}, expected {len}", v.len())));
    }
    Ok(())
}

/// Signs of `β_S`: entrywise in lasso mode, block directions `β_i/‖β_i‖₂` in group mode.
fn support_signs<T: Real>(beta: &DVector<T>, support: &[usize], m: usize, mode: CertMode) -> Result<DVector<T>> {
    let mut s = DVector::zeros(support.len() * m);
    for (k, &b) in support.iter().enumerate() {
        let blk = beta.rows(b * m, m);
        let nb = blk.norm();
        if nb == T::zero() {
            return Err(Error::input(format!("block {b} is in the support but beta is zero there")));
        }
        let mut out = s.rows_mut(k * m, m);
        match mode {
            CertMode::Group => out.copy_from(&(blk / nb)),
            CertMode::Lasso => {
                for (o, v) in out.iter_mut().zip(blk.iter()) {
                    *o = if *v > T::zero() {
                        T::one()
                    } else if *v < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    };
                }
            }
        }
    }
    Ok(s)
}

/// `σ_min(Φ_S)`, zero when `Φ_S` has more columns than rows.
fn sigma_min<T: Real>(x: &DMatrix<T>) -> T {
    if x.ncols() > x.nrows() {
        return T::zero();
    }
    x.singular_values().min()
}

fn full_rank<T: Real>(x: &DMatrix<T>) -> bool {
    if x.ncols() > x.nrows() {
        return false;
    }
    let sv = x.singular_values();
    sv.min() > T::lit(RANK_TOL) * sv.max()
}

/// Largest per-column magnitude (lasso) or per-block norm (group) of `Φ*w`
/// over the blocks not in `support`; zero when the complement is empty.
fn complement_norm<T: Real>(d: &Dictionary<T>, support: &[usize], w: &DVector<T>, mode: CertMode) -> f64 {
    let m = d.block_size();
    let phit_w = d.entries().tr_mul(w);
    let mut worst = 0.0f64;
    for b in 0..d.num_blocks() {
        if support.binary_search(&b).is_ok() {
            continue;
        }
        let blk = phit_w.rows(b * m, m);
        let v = match mode {
            CertMode::Group => blk.norm(),
            CertMode::Lasso => blk.amax(),
        };
        worst = worst.max(v.as_f64());
    }
    worst
}

/// Dual certificate `h = (Φ_S†)* s̄` for unique recovery by ℓ2,1 minimization.
///
/// Passes iff `‖Φ_S*h − s̄‖₂ ≤ 1e-8` and `Z₀ = max_{j∉S} ‖Φ_j*h‖₂ < 1`.
/// Details: `z0`, `sign_residual`, `sigma_min`.
pub fn exact_recovery_certificate<T: Real>(d: &Dictionary<T>, support: &[usize], beta: &DVector<T>) -> Result<CertificateReport> {
    check_support(d, support)?;
    check_len(beta, d.p(), "beta")?;
    let s = support_signs(beta, support, d.block_size(), CertMode::Group)?;
    let x = select_columns(d.entries(), &d.block_columns(support));
    let mut details = BTreeMap::new();
    let smin = sigma_min(&x).as_f64();
    details.insert("sigma_min".to_string(), smin);
    if !support.is_empty() && !full_rank(&x) {
        return Ok(CertificateReport {
            kind: CertificateKind::ExactRecovery,
            passed: false,
            details,
            reason: Some("invertibility".to_string()),
        });
    }
    let h = if support.is_empty() {
        DVector::zeros(d.n())
    } else {
        pseudo_inverse(&x, T::lit(RANK_TOL)).tr_mul(&s)
    };
    let sign_residual = (x.tr_mul(&h) - &s).norm().as_f64();
    let z0 = complement_norm(d, support, &h, CertMode::Group);
    details.insert("sign_residual".to_string(), sign_residual);
    details.insert("z0".to_string(), z0);
    details.insert("h_norm".to_string(), h.norm().as_f64());
    let reason = if sign_residual > SIGN_RESIDUAL_TOL {
        Some(format!("certificate not established: sign residual {sign_residual:e}"))
    } else if z0 >= 1.0 {
        Some(format!("certificate not established: Z0 = {z0} is not below 1"))
    } else {
        None
    };
    Ok(CertificateReport {
        kind: CertificateKind::ExactRecovery,
        passed: reason.is_none(),
        details,
        reason,
    })
}

/// `‖(Φ_S*Φ_S)⁻¹‖₂ = 1/σ_min(Φ_S)² ≤ 2`; `+∞` when `Φ_S` is singular.
pub fn invertibility_condition<T: Real>(d: &Dictionary<T>, support: &[usize]) -> Result<ConditionCheck> {
    check_support(d, support)?;
    if support.is_empty() {
        return Err(Error::input("invertibility condition needs a nonempty support"));
    }
    let x = select_columns(d.entries(), &d.block_columns(support));
    let smin = sigma_min(&x).as_f64();
    let norm_inv = if smin > 0.0 && full_rank(&x) {
        1.0 / (smin * smin)
    } else {
        f64::INFINITY
    };
    Ok(ConditionCheck {
        passed: norm_inv <= INVERTIBILITY_BOUND,
        statistic: norm_inv,
        threshold: INVERTIBILITY_BOUND,
    })
}

/// `‖Φ*z‖_∞ ≤ √2 λσ` (lasso) or `‖Φ*z‖_{2,∞} ≤ √(2m) λσ` (group).
pub fn orthogonality_condition<T: Real>(
    d: &Dictionary<T>,
    z: &DVector<T>,
    lambda: f64,
    sigma: f64,
    mode: CertMode,
) -> Result<ConditionCheck> {
    check_len(z, d.n(), "z")?;
    let m = d.block_size();
    let corr = d.entries().tr_mul(z);
    let (statistic, scale) = match mode {
        CertMode::Lasso => (corr.amax().as_f64(), 1.0),
        CertMode::Group => (norm_2inf(&corr, m).as_f64(), (m as f64).sqrt()),
    };
    let threshold = std::f64::consts::SQRT_2 * lambda * sigma * scale;
    Ok(ConditionCheck {
        passed: statistic <= threshold,
        statistic,
        threshold,
    })
}

/// `Z₀ = ‖Φ_{S^C}*Φ_S(Φ_S*Φ_S)⁻¹ sign(β_S)‖ ≤ 1/4` and
/// `Z₁ = ‖Φ_{S^C}*Φ_S(Φ_S*Φ_S)⁻¹Φ_S*z‖ ≤ (3/2 − √2) λσ` (times `√m` in group
/// mode), with the mode's signs and norm.
///
/// A singular `Φ_S*Φ_S` is an error; a merely ill-conditioned one is allowed
/// here and caught by [`invertibility_condition`].
#[allow(clippy::too_many_arguments)]
pub fn complementary_size_condition<T: Real>(
    d: &Dictionary<T>,
    support: &[usize],
    beta: &DVector<T>,
    z: &DVector<T>,
    lambda: f64,
    sigma: f64,
    mode: CertMode,
) -> Result<ComplementarySize> {
    check_support(d, support)?;
    check_len(beta, d.p(), "beta")?;
    check_len(z, d.n(), "z")?;
    let m = d.block_size();
    let s = support_signs(beta, support, m, mode)?;
    let (w0, w1) = if support.is_empty() {
        (DVector::zeros(d.n()), DVector::zeros(d.n()))
    } else {
        let x = select_columns(d.entries(), &d.block_columns(support));
        if !full_rank(&x) {
            return Err(Error::RankDeficient {
                support: support.to_vec(),
            });
        }
        let chol = x.tr_mul(&x).cholesky().ok_or_else(|| Error::RankDeficient {
            support: support.to_vec(),
        })?;
        (&x * chol.solve(&s), &x * chol.solve(&x.tr_mul(z)))
    };
    let z0 = complement_norm(d, support, &w0, mode);
    let z1 = complement_norm(d, support, &w1, mode);
    let scale = match mode {
        CertMode::Lasso => 1.0,
        CertMode::Group => (m as f64).sqrt(),
    };
    let z1_threshold = (1.5 - std::f64::consts::SQRT_2) * lambda * sigma * scale;
    Ok(ComplementarySize {
        passed: z0 <= Z0_BOUND && z1 <= z1_threshold,
        z0,
        z1,
        z0_threshold: Z0_BOUND,
        z1_threshold,
    })
}

/// `‖Φ*(y − Φβ̂)‖_{2,∞} ≤ 2λσ√m + 1e-6`, which every group-lasso optimum satisfies.
pub fn group_lasso_optimality_check<T: Real>(
    d: &Dictionary<T>,
    y: &DVector<T>,
    beta_hat: &DVector<T>,
    lambda: f64,
    sigma: f64,
    m: usize,
) -> Result<ConditionCheck> {
    check_len(y, d.n(), "y")?;
    check_len(beta_hat, d.p(), "beta_hat")?;
    if m == 0 || d.p() % m != 0 {
        return Err(Error::input(format!("block size {m} does not divide p = {}", d.p())));
    }
    let corr = d.entries().tr_mul(&(y - d.entries() * beta_hat));
    let statistic = norm_2inf(&corr, m).as_f64();
    let threshold = 2.0 * lambda * sigma * (m as f64).sqrt();
    Ok(ConditionCheck {
        passed: statistic <= threshold + OPTIMALITY_SLACK,
        statistic,
        threshold,
    })
}

/// `2(2 + √2)² λ² m k σ²`, the prediction-error bound implied by the three conditions.
pub fn regression_error_bound(lambda: f64, sigma: f64, m: usize, k: usize) -> f64 {
    let c = 2.0 + std::f64::consts::SQRT_2;
    2.0 * c * c * lambda * lambda * (m * k) as f64 * sigma * sigma
}

/// Invertibility, orthogonality and complementary size together.
///
/// Details: `norm_inv`, `orthogonality`, `orthogonality_threshold`, `z0`,
/// `z1`, `z1_threshold`. `reason` names the first failing component.
#[allow(clippy::too_many_arguments)]
pub fn regression_certificate<T: Real>(
    d: &Dictionary<T>,
    support: &[usize],
    beta: &DVector<T>,
    z: &DVector<T>,
    lambda: f64,
    sigma: f64,
    mode: CertMode,
) -> Result<CertificateReport> {
    let mut details = BTreeMap::new();
    let kind = mode.kind();
    let orth = orthogonality_condition(d, z, lambda, sigma, mode)?;
    details.insert("orthogonality".to_string(), orth.statistic);
    details.insert("orthogonality_threshold".to_string(), orth.threshold);
    if support.is_empty() {
        // With β = 0 only the orthogonality condition carries information.
        return Ok(CertificateReport {
            kind,
            passed: orth.passed,
            details,
            reason: (!orth.passed).then(|| "orthogonality".to_string()),
        });
    }
    let inv = invertibility_condition(d, support)?;
    details.insert("norm_inv".to_string(), inv.statistic);
    if !inv.statistic.is_finite() {
        return Ok(CertificateReport {
            kind,
            passed: false,
            details,
            reason: Some("invertibility".to_string()),
        });
    }
    let cs = complementary_size_condition(d, support, beta, z, lambda, sigma, mode)?;
    details.insert("z0".to_string(), cs.z0);
    details.insert("z1".to_string(), cs.z1);
    details.insert("z1_threshold".to_string(), cs.z1_threshold);
    let reason = if !inv.passed {
        Some("invertibility")
    } else if !orth.passed {
        Some("orthogonality")
    } else if !cs.passed {
        Some("complementary size")
    } else {
        None
    };
    Ok(CertificateReport {
        kind,
        passed: reason.is_none(),
        details,
        reason: reason.map(str::to_string),
    })
}
