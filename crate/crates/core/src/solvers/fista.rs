use nalgebra::DVector;

use super::{
    block_norms, block_shrink_in_place, debias, detect_block_support, norm_21, norm_2inf, SolverConfig, SolverResult,
    StepRule, SupportThresholds,
};
use crate::linalg::{spectral_norm, SPECTRAL_TOL};
use crate::metrics::Dictionary;
use crate::{Error, Real, Result};

const KKT_EVERY: usize = 10;
/// Safety margin on the Lipschitz constant from the power-iteration norm.
const LIPSCHITZ_MARGIN: f64 = 1e-6;
const BACKTRACK_FACTOR: f64 = 2.0;

/// `½‖y − Φβ‖² + 2λσ‖β‖₁`.
pub fn lasso<T: Real>(d: &Dictionary<T>, y: &DVector<T>, lambda: T, sigma: T, config: &SolverConfig) -> Result<SolverResult<T>> {
    let thr = T::lit(2.0) * lambda * sigma;
    penalized_least_squares(d, y, 1, thr, config)
}

/// `½‖y − Φβ‖² + 2λσ√m ‖β‖_{2,1}` with the dictionary's own block size.
pub fn group_lasso<T: Real>(
    d: &Dictionary<T>,
    y: &DVector<T>,
    lambda: T,
    sigma: T,
    config: &SolverConfig,
) -> Result<SolverResult<T>> {
    let m = d.block_size();
    let thr = T::lit(2.0) * lambda * sigma * T::from_count(m).sqrt();
    penalized_least_squares(d, y, m, thr, config)
}

/// `min ½‖y − Φβ‖² + thr ‖β‖_{2,1}` over blocks of `m` consecutive entries.
///
/// Converges when the block KKT violation falls to `rel_tol`: for nonzero
/// blocks `‖Φ_i*(y − Φβ) − thr β_i/‖β_i‖‖`, for zero blocks
/// `max(0, ‖Φ_i*(y − Φβ)‖ − thr)`. The two parts are reported as the dual and
/// primal residuals respectively.
pub fn penalized_least_squares<T: Real>(
    d: &Dictionary<T>,
    y: &DVector<T>,
    m: usize,
    thr: T,
    config: &SolverConfig,
) -> Result<SolverResult<T>> {
    config.validate()?;
    let (n, p) = (d.n(), d.p());
    if y.len() != n {
        return Err(Error::input(format!("observation length {} != n = {n}", y.len())));
    }
    if m == 0 || p % m != 0 {
        return Err(Error::input(format!("block size {m} does not divide p = {p}")));
    }
    if !(thr >= T::zero()) || !thr.is_finite() {
        return Err(Error::input("penalty must be finite and non-negative"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("observation contains non-finite entries"));
    }
    let phi = d.entries();
    let half = T::lit(0.5);
    let objective = |resid: &DVector<T>, b: &DVector<T>| half * resid.norm_squared() + thr * norm_21(b, m);

    let corr = phi.tr_mul(y);
    if norm_2inf(&corr, m) <= thr {
        // Zero satisfies the optimality conditions outright.
        let beta = DVector::zeros(p);
        return finish(d, y, beta, 0, true, 0.0, 0.0, objective(y, &DVector::zeros(p)).as_f64(), Vec::new(), config);
    }

    let mut lip = match config.step_rule {
        StepRule::FixedLipschitz => {
            let s = spectral_norm(phi, T::lit(SPECTRAL_TOL))?;
            s * s * T::lit(1.0 + LIPSCHITZ_MARGIN)
        }
        StepRule::Backtracking => T::one(),
    };

    let mut x = DVector::<T>::zeros(p);
    let mut ax = DVector::<T>::zeros(n);
    let mut yk = x.clone();
    let mut ay = ax.clone();
    let mut t = T::one();
    let mut f_x = objective(&(&ax - y), &x);
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);

    for it in 1..=config.max_iters {
        let resid_y = &ay - y;
        let grad = phi.tr_mul(&resid_y);
        let f_smooth_y = half * resid_y.norm_squared();
        let (x_new, ax_new) = loop {
            let mut cand = &yk - &grad / lip;
            block_shrink_in_place(cand.as_mut_slice(), m, thr / lip);
            let a_cand = phi * &cand;
            if config.step_rule == StepRule::FixedLipschitz {
                break (cand, a_cand);
            }
            let step = &cand - &yk;
            let upper = f_smooth_y + grad.dot(&step) + half * lip * step.norm_squared();
            let actual = half * (&a_cand - y).norm_squared();
            // Relative slack absorbs rounding once the step is tiny.
            if actual <= upper + T::lit(1e-12) * (T::one() + f_smooth_y.abs()) {
                break (cand, a_cand);
            }
            lip *= T::lit(BACKTRACK_FACTOR);
        };
        let f_new = objective(&(&ax_new - y), &x_new);

        if f_new > f_x {
            // Momentum overshot: restart from the last iterate.
            t = T::one();
            yk.copy_from(&x);
            ay.copy_from(&ax);
        } else {
            let t_new = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) * half;
            let mom = (t - T::one()) / t_new;
            yk = &x_new + (&x_new - &x) * mom;
            ay = &ax_new + (&ax_new - &ax) * mom;
            x = x_new;
            ax = ax_new;
            f_x = f_new;
            t = t_new;
        }

        if it % KKT_EVERY == 0 || it == config.max_iters {
            (primal, dual) = kkt_parts(phi.tr_mul(&(y - &ax)), &x, m, thr);
            if primal.max(dual) <= config.rel_tol {
                return finish(d, y, x, it, true, primal, dual, f_x.as_f64(), Vec::new(), config);
            }
        }
    }
    finish(d, y, x, config.max_iters, false, primal, dual, f_x.as_f64(), Vec::new(), config)
}

/// `(zero-block violation, nonzero-block violation)` of the optimality conditions.
fn kkt_parts<T: Real>(corr: DVector<T>, x: &DVector<T>, m: usize, thr: T) -> (f64, f64) {
    let mut primal = 0.0f64;
    let mut dual = 0.0f64;
    for (i, xn) in block_norms(x.as_slice(), m).enumerate() {
        let g = corr.rows(i * m, m);
        if xn > T::zero() {
            let xb = x.rows(i * m, m);
            dual = dual.max((g - xb * (thr / xn)).norm().as_f64());
        } else {
            primal = primal.max((g.norm() - thr).as_f64());
        }
    }
    (primal.max(0.0), dual)
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Real>(
    d: &Dictionary<T>,
    y: &DVector<T>,
    beta: DVector<T>,
    iterations: usize,
    converged: bool,
    primal: f64,
    dual: f64,
    objective: f64,
    mut warnings: Vec<String>,
    config: &SolverConfig,
) -> Result<SolverResult<T>> {
    let (beta_hat, pre_debias) = if config.debias {
        let support = detect_block_support(&beta, d.block_size(), SupportThresholds::default());
        match debias(d, y, &support) {
            Ok(refit) => (refit, Some(beta)),
            Err(Error::RankDeficient { .. }) => {
                warnings.push(format!(
                    "support of {} blocks is rank deficient; returning the penalized estimate",
                    support.len()
                ));
                (beta.clone(), Some(beta))
            }
            Err(e) => return Err(e),
        }
    } else {
        (beta, None)
    };
    Ok(SolverResult {
        beta_hat,
        pre_debias,
        iterations,
        converged,
        primal_residual: primal,
        dual_residual: dual,
        kkt_residual: primal.max(dual),
        objective,
        warnings,
    })
}
