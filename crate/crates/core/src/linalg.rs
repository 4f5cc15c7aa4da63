//! Dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Real, Result};

/// Default relative tolerance for [`spectral_norm`].
pub const SPECTRAL_TOL: f64 = 1e-10;

/// Iteration cap for the power method before falling back to a full decomposition.
pub const POWER_MAX_ITERS: usize = 10_000;

pub(crate) fn ensure_finite<T: Real>(m: &DMatrix<T>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::input(format!("{what} contains non-finite entries")))
    }
}

/// The smaller of `M*M` and `MM*`; both share the nonzero spectrum.
pub fn small_gram<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.tr_mul(m)
    }
}

/// Largest singular value of `m`.
///
/// Power iteration on the smaller Gram matrix from the normalized all-ones
/// vector, stopped when the Rayleigh quotient stabilizes. Falls back to a
/// symmetric eigendecomposition when the iterate collapses, the iteration cap
/// is hit, or the result undercuts the largest Gram diagonal entry (which
/// happens when the start vector misses the dominant eigenspace).
pub fn spectral_norm<T: Real>(m: &DMatrix<T>, tol: T) -> Result<T> {
    if tol <= T::zero() {
        return Err(Error::input("spectral norm tolerance must be positive"));
    }
    ensure_finite(m, "matrix")?;
    if m.is_empty() || m.iter().all(|v| *v == T::zero()) {
        return Ok(T::zero());
    }
    let tol = tol.max(T::lit(10.0) * T::machine_epsilon());
    let gram = small_gram(m);
    let lambda = match power_iteration_psd(&gram, tol, POWER_MAX_ITERS) {
        Some(l) => l,
        None => max_abs_eigenvalue(&gram),
    };
    Ok(lambda.max(T::zero()).sqrt())
}

/// Dominant eigenvalue of a positive semidefinite matrix by power iteration.
/// `None` signals that the caller should fall back to a direct method.
pub(crate) fn power_iteration_psd<T: Real>(a: &DMatrix<T>, tol: T, max_iters: usize) -> Option<T> {
    let k = a.nrows();
    let mut x = DVector::from_element(k, T::one() / T::from_count(k).sqrt());
    let mut lambda_prev = T::zero();
    let stop = tol * T::lit(1e-2);
    let max_diag = a.diagonal().iter().fold(T::zero(), |acc, v| acc.max(*v));
    for _ in 0..max_iters {
        let y = a * &x;
        let lambda = x.dot(&y);
        let norm = y.norm();
        if norm == T::zero() || !norm.is_finite() {
            return None;
        }
        x = y / norm;
        if (lambda - lambda_prev).abs() <= stop * lambda.abs() {
            // A Rayleigh quotient below a diagonal entry cannot be the top eigenvalue.
            if lambda < max_diag * (T::one() - tol) {
                return None;
            }
            return Some(lambda);
        }
        lambda_prev = lambda;
    }
    None
}

/// `max |λ|` of a symmetric matrix via a full eigendecomposition.
pub fn max_abs_eigenvalue<T: Real>(a: &DMatrix<T>) -> T {
    if a.is_empty() {
        return T::zero();
    }
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .fold(T::zero(), |acc, v| acc.max(v.abs()))
}

/// Exact spectral norm through the singular value decomposition.
pub fn exact_spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(T::zero(), |acc, v| acc.max(*v))
}

/// Singular values in descending order.
pub fn singular_values<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<T> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Moore-Penrose pseudoinverse with singular values below `rel_cutoff * σ_max` discarded.
pub fn pseudo_inverse<T: Real>(m: &DMatrix<T>, rel_cutoff: T) -> DMatrix<T> {
    if m.is_empty() {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(T::zero(), |a, v| a.max(*v));
    let cut = rel_cutoff * smax;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > cut && *s > T::zero() {
            let vi = v_t.row(i).transpose();
            let ui = u.column(i);
            out += (vi / *s) * ui.transpose();
        }
    }
    out
}

/// Pseudoinverse of a symmetric positive semidefinite matrix via its eigendecomposition.
pub(crate) fn psd_pseudo_inverse<T: Real>(a: &DMatrix<T>, rel_cutoff: T) -> (DMatrix<T>, usize) {
    let eig = SymmetricEigen::new(a.clone());
    let lmax = eig.eigenvalues.iter().fold(T::zero(), |acc, v| acc.max(*v));
    let cut = rel_cutoff * lmax;
    let mut inv_diag = eig.eigenvalues.clone();
    let mut rank = 0;
    for v in inv_diag.iter_mut() {
        if *v > cut && *v > T::zero() {
            *v = T::one() / *v;
            rank += 1;
        } else {
            *v = T::zero();
        }
    }
    let q = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * inv_diag[j]);
    (scaled * q.transpose(), rank)
}

/// Dominant eigenpair of a symmetric matrix (largest algebraic eigenvalue).
pub(crate) fn top_eigenpair<T: Real>(a: &DMatrix<T>) -> (T, DVector<T>) {
    let eig = SymmetricEigen::new(a.clone());
    let (idx, val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, T::min_value().unwrap_or(-T::infinity())), |acc, (i, v)| {
            if *v > acc.1 {
                (i, *v)
            } else {
                acc
            }
        });
    (val, eig.eigenvectors.column(idx).into_owned())
}

/// Selects columns `cols` (in the given order) into a new matrix.
pub(crate) fn select_columns<T: Real>(m: &DMatrix<T>, cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}
