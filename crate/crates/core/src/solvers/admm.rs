use nalgebra::{DMatrix, DVector};

use super::{
    block_norms, block_shrink_in_place, debias, detect_block_support, norm_21, SolverConfig, SolverResult,
    SupportThresholds,
};
use crate::linalg::{psd_pseudo_inverse, select_columns};
use crate::metrics::Dictionary;
use crate::{Error, Real, Result};

/// How often (in iterations) the polish step and the KKT check run.
const CHECK_EVERY: usize = 25;
const RHO_ADAPT_EVERY: usize = 10;
const RHO_RATIO: f64 = 10.0;
const RHO_FACTOR: f64 = 2.0;
/// Over-relaxation weight for the `x` iterate.
const RELAXATION: f64 = 1.6;
/// Eigenvalue cutoff (relative) when inverting `ΦΦ*`.
const GRAM_CUTOFF: f64 = 1e-13;

/// Orthogonal projection onto `{β : Φβ = y}` using a cached `(ΦΦ*)⁺`.
struct AffineProjector<'a, T: Real> {
    phi: &'a DMatrix<T>,
    gram_pinv: DMatrix<T>,
    y: &'a DVector<T>,
}

impl<T: Real> AffineProjector<'_, T> {
    fn project(&self, v: &DVector<T>) -> DVector<T> {
        let resid = self.phi * v - self.y;
        v - self.phi.tr_mul(&(&self.gram_pinv * resid))
    }

    /// Least-norm `h` with `Φ*h ≈ g`.
    fn dual_from(&self, g: &DVector<T>) -> DVector<T> {
        &self.gram_pinv * (self.phi * g)
    }
}

/// `min ‖β‖₁` subject to `Φβ = y`; the `m = 1` case of [`l21_basis_pursuit`].
pub fn l1_basis_pursuit<T: Real>(d: &Dictionary<T>, y: &DVector<T>, config: &SolverConfig) -> Result<SolverResult<T>> {
    l21_basis_pursuit(&d.reblocked(1)?, y, config)
}

/// `min ‖β‖_{2,1}` subject to `Φβ = y`.
///
/// Scaled ADMM on the split `x = z` with `x` constrained to the affine set and
/// `z` carrying the norm. Every [`CHECK_EVERY`] iterations the blocks active in
/// `z` are refit by least squares; if the refit is feasible and the dual
/// vector `h = Φ_S(Φ_S*Φ_S)⁻¹ s̄` satisfies `‖Φ_j*h‖₂ ≤ 1 + rel_tol` off the
/// support, the refit is optimal and returned immediately.
pub fn l21_basis_pursuit<T: Real>(d: &Dictionary<T>, y: &DVector<T>, config: &SolverConfig) -> Result<SolverResult<T>> {
    config.validate()?;
    let (n, p, m) = (d.n(), d.p(), d.block_size());
    if y.len() != n {
        return Err(Error::input(format!("observation length {} != n = {n}", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("observation contains non-finite entries"));
    }
    let y_norm = y.norm().as_f64();
    if y_norm == 0.0 {
        return Ok(SolverResult {
            beta_hat: DVector::zeros(p),
            pre_debias: None,
            iterations: 0,
            converged: true,
            primal_residual: 0.0,
            dual_residual: 0.0,
            kkt_residual: 0.0,
            objective: 0.0,
            warnings: Vec::new(),
        });
    }

    let phi = d.entries();
    let (gram_pinv, rank) = psd_pseudo_inverse(&(phi * phi.transpose()), T::lit(GRAM_CUTOFF));
    let mut warnings = Vec::new();
    if rank < n {
        warnings.push(format!("dictionary has row rank {rank} < n = {n}"));
    }
    let proj = AffineProjector {
        phi,
        gram_pinv,
        y,
    };
    let feas_tol = config.abs_tol * (1.0 + y_norm);
    let mut x = phi.tr_mul(&(&proj.gram_pinv * y));
    let infeas = (phi * &x - y).norm().as_f64();
    if infeas > feas_tol.max(1e-9 * (1.0 + y_norm)) {
        return Err(Error::Infeasible(format!(
            "least-norm solution leaves residual {infeas:e} (tolerance {feas_tol:e})"
        )));
    }

    let sqrt_p = (p as f64).sqrt();
    let mut rho = config.admm_rho;
    let mut z = x.clone();
    let mut u = DVector::<T>::zeros(p);
    let mut s_norm = f64::INFINITY;
    let mut kkt = f64::INFINITY;

    let alpha = T::lit(RELAXATION);
    let beta_w = T::one() - alpha;
    for it in 1..=config.max_iters {
        x = proj.project(&(&z - &u));
        let x_hat = &x * alpha + &z * beta_w;
        let z_old = std::mem::replace(&mut z, &x_hat + &u);
        block_shrink_in_place(z.as_mut_slice(), m, T::lit(1.0 / rho));
        u += &x_hat - &z;

        let r_norm = (&x - &z).norm().as_f64();
        s_norm = rho * (&z - &z_old).norm().as_f64();
        let eps_pri = sqrt_p * config.abs_tol + config.rel_tol * x.norm().as_f64().max(z.norm().as_f64());
        let eps_dual = sqrt_p * config.abs_tol + config.rel_tol * rho * u.norm().as_f64();
        let admm_ok = r_norm <= eps_pri && s_norm <= eps_dual;

        if it % CHECK_EVERY == 0 || it == config.max_iters {
            if let Some(cert) = polish(d, y, &z, feas_tol, config.rel_tol) {
                return Ok(SolverResult {
                    objective: norm_21(&cert.beta, m).as_f64(),
                    beta_hat: cert.beta,
                    pre_debias: None,
                    iterations: it,
                    converged: true,
                    primal_residual: cert.residual,
                    dual_residual: s_norm,
                    kkt_residual: cert.kkt,
                    warnings,
                });
            }
            if admm_ok {
                kkt = admm_kkt(&proj, &z, &u, rho, m);
                if kkt <= config.rel_tol {
                    return Ok(SolverResult {
                        objective: norm_21(&z, m).as_f64(),
                        primal_residual: (phi * &z - y).norm().as_f64(),
                        beta_hat: z,
                        pre_debias: None,
                        iterations: it,
                        converged: true,
                        dual_residual: s_norm,
                        kkt_residual: kkt,
                        warnings,
                    });
                }
            }
        }

        if it % RHO_ADAPT_EVERY == 0 {
            // The projection does not depend on ρ, so rescaling is free.
            if r_norm > RHO_RATIO * s_norm {
                rho *= RHO_FACTOR;
                u /= T::lit(RHO_FACTOR);
            } else if s_norm > RHO_RATIO * r_norm {
                rho /= RHO_FACTOR;
                u *= T::lit(RHO_FACTOR);
            }
        }
    }

    if kkt.is_infinite() {
        kkt = admm_kkt(&proj, &z, &u, rho, m);
    }
    Ok(SolverResult {
        objective: norm_21(&z, m).as_f64(),
        primal_residual: (phi * &z - y).norm().as_f64(),
        beta_hat: z,
        pre_debias: None,
        iterations: config.max_iters,
        converged: false,
        dual_residual: s_norm,
        kkt_residual: kkt,
        warnings,
    })
}

/// Block KKT violation for the sparse iterate `z`, with `h` the least-squares
/// preimage of the scaled dual `ρu ∈ ∂‖z‖_{2,1}`: on active blocks
/// `‖Φ_i*h − z_i/‖z_i‖‖₂`, elsewhere `‖Φ_i*h‖₂ − 1`.
fn admm_kkt<T: Real>(proj: &AffineProjector<'_, T>, z: &DVector<T>, u: &DVector<T>, rho: f64, m: usize) -> f64 {
    let h = proj.dual_from(&(u * T::lit(rho)));
    let phit_h = proj.phi.tr_mul(&h);
    let mut worst = 0.0f64;
    for (i, zn) in block_norms(z.as_slice(), m).enumerate() {
        let ph = phit_h.rows(i * m, m);
        if zn > T::zero() {
            worst = worst.max((ph - z.rows(i * m, m) / zn).norm().as_f64());
        } else {
            worst = worst.max(ph.norm().as_f64() - 1.0);
        }
    }
    worst.max(0.0)
}

struct Certified<T: Real> {
    beta: DVector<T>,
    residual: f64,
    kkt: f64,
}

/// Least-squares refit on the support of `z`, accepted only with a dual
/// certificate. Tries the exact nonzero pattern of `z` first (shrinkage
/// produces exact zeros), then the thresholded support.
fn polish<T: Real>(d: &Dictionary<T>, y: &DVector<T>, z: &DVector<T>, feas_tol: f64, kkt_tol: f64) -> Option<Certified<T>> {
    let m = d.block_size();
    let exact: Vec<usize> = block_norms(z.as_slice(), m)
        .enumerate()
        .filter(|(_, v)| *v > T::zero())
        .map(|(i, _)| i)
        .collect();
    let thresholded = detect_block_support(z, m, SupportThresholds::default());
    let mut tried = Vec::new();
    for support in [exact, thresholded] {
        if support.is_empty() || support.len() * m > d.n() || tried.contains(&support) {
            continue;
        }
        if let Some(c) = certify_support(d, y, &support, feas_tol, kkt_tol) {
            return Some(c);
        }
        tried.push(support);
    }
    None
}

fn certify_support<T: Real>(d: &Dictionary<T>, y: &DVector<T>, support: &[usize], feas_tol: f64, kkt_tol: f64) -> Option<Certified<T>> {
    let beta = debias(d, y, support).ok()?;
    let residual = (d.entries() * &beta - y).norm().as_f64();
    if residual > feas_tol {
        return None;
    }
    let kkt = certificate_violation(d, support, &beta)?;
    (kkt <= kkt_tol).then_some(Certified { beta, residual, kkt })
}

/// `max(‖Φ_S*h − s̄‖_{2,∞}, max_{j∉S} ‖Φ_j*h‖₂ − 1, 0)` for `h = Φ_S(Φ_S*Φ_S)⁻¹ s̄`,
/// where `s̄` stacks the block directions of `beta` on `support`.
pub(crate) fn certificate_violation<T: Real>(d: &Dictionary<T>, support: &[usize], beta: &DVector<T>) -> Option<f64> {
    let m = d.block_size();
    let cols = d.block_columns(support);
    let mut dirs = DVector::<T>::zeros(cols.len());
    for (k, &b) in support.iter().enumerate() {
        let blk = beta.rows(b * m, m);
        let nb = blk.norm();
        if nb == T::zero() {
            return None;
        }
        dirs.rows_mut(k * m, m).copy_from(&(blk / nb));
    }
    let xs = select_columns(d.entries(), &cols);
    let coef = xs.tr_mul(&xs).cholesky()?.solve(&dirs);
    let h = &xs * coef;
    let cond_i = super::norm_2inf(&(xs.tr_mul(&h) - &dirs), m).as_f64();
    let phit_h = d.entries().tr_mul(&h);
    let mut z0 = 0.0f64;
    for b in 0..d.num_blocks() {
        if support.binary_search(&b).is_err() {
            z0 = z0.max(phit_h.rows(b * m, m).norm().as_f64());
        }
    }
    Some(cond_i.max(z0 - 1.0).max(0.0))
}
