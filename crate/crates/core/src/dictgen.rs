//! Dictionary families: Gaussian unit-norm matrices, their spectral-norm
//! multiplied variants, and Kronecker products `P ⊗ Q`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::top_eigenpair;
use crate::metrics::Dictionary;
use crate::rng::{standard_normal, stream};
use crate::{Error, Real, Result};

/// Orthonormality tolerance for the `Q` factor of a Kronecker dictionary.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictKind {
    RandomUnitNorm,
    SpectralMultiplied,
    Kronecker,
}

/// Everything needed to regenerate a dictionary bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictGenSpec {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub multiplier: u32,
    pub kind: DictKind,
}

fn one() -> u32 {
    1
}

/// Gaussian entries drawn column by column, each column scaled to unit norm.
pub fn random_unit_norm<T: Real>(n: usize, p: usize, m: usize, seed: u64) -> Result<Dictionary<T>> {
    if n == 0 || m == 0 || p < m {
        return Err(Error::input(format!("degenerate dimensions n={n}, p={p}, m={m}")));
    }
    let mut rng = stream(seed);
    // Column-major fill: column j consumes draws j*n .. (j+1)*n.
    let data: Vec<T> = (0..n * p).map(|_| standard_normal(&mut rng)).collect();
    Dictionary::new(DMatrix::from_vec(n, p, data), m)
}

/// Scales the largest singular value of `d` by `tau`, then renormalizes columns.
///
/// With `σ₁ u₁ v₁*` the top singular triple, the edited matrix
/// `Φ + (τ − 1) σ₁ u₁ v₁*` equals `(Id + (τ − 1) u₁u₁*) Φ` (or
/// `Φ (Id + (τ − 1) v₁v₁*)` for tall `Φ`), so only the dominant eigenvector of
/// the smaller Gram matrix is needed.
pub fn apply_spectral_multiplier<T: Real>(d: &Dictionary<T>, tau: u32) -> Result<Dictionary<T>> {
    if tau == 0 {
        return Err(Error::input("spectral multiplier must be at least 1"));
    }
    if tau == 1 {
        return Ok(d.clone());
    }
    let phi = d.entries();
    let scale = T::from_u32(tau).expect("small integer") - T::one();
    let edited = if phi.nrows() <= phi.ncols() {
        let (_, u) = top_eigenpair(&(phi * phi.transpose()));
        let ut_phi = u.transpose() * phi;
        phi + (u * scale) * ut_phi
    } else {
        let (_, v) = top_eigenpair(&phi.tr_mul(phi));
        let phi_v = phi * &v;
        phi + (phi_v * scale) * v.transpose()
    };
    Dictionary::new(edited, d.block_size())
}

/// `P ⊗ Q` with blocks of `m = cols(Q)` columns, one block per column of `P`.
pub fn kronecker_dictionary<T: Real>(p_factor: &DMatrix<T>, q_factor: &DMatrix<T>) -> Result<Dictionary<T>> {
    if p_factor.is_empty() || q_factor.is_empty() {
        return Err(Error::input("Kronecker factors must be nonempty"));
    }
    let qtq = q_factor.tr_mul(q_factor);
    let dev = (qtq - DMatrix::<T>::identity(q_factor.ncols(), q_factor.ncols()))
        .iter()
        .fold(T::zero(), |a, v| a.max(v.abs()));
    if dev > T::lit(ORTHONORMAL_TOL) {
        return Err(Error::input(format!(
            "Q*Q deviates from the identity by {dev:e}, above tolerance {ORTHONORMAL_TOL:e}"
        )));
    }
    let tol = T::lit(crate::metrics::UNIT_NORM_TOL);
    if let Some((j, _)) = p_factor
        .column_iter()
        .enumerate()
        .find(|(_, c)| (c.norm() - T::one()).abs() > tol)
    {
        return Err(Error::input(format!("column {j} of P is not unit norm")));
    }
    Dictionary::new(p_factor.kronecker(q_factor), q_factor.ncols())
}

/// First `cols` columns of a Haar-random orthogonal `rows × rows` matrix
/// (QR of a Gaussian matrix with the sign of `diag(R)` fixed).
pub fn random_orthonormal_columns<T: Real>(rows: usize, cols: usize, seed: u64) -> Result<DMatrix<T>> {
    if cols == 0 || cols > rows {
        return Err(Error::input(format!("cannot draw {cols} orthonormal columns in dimension {rows}")));
    }
    let mut rng = stream(seed);
    let data: Vec<T> = (0..rows * rows).map(|_| standard_normal(&mut rng)).collect();
    let qr = DMatrix::from_vec(rows, rows, data).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..rows {
        if r[(j, j)] < T::zero() {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q.columns(0, cols).into_owned())
}

/// Random `rows × cols` matrix with unit-norm columns (not blocked).
pub fn random_unit_columns<T: Real>(rows: usize, cols: usize, seed: u64) -> Result<DMatrix<T>> {
    Ok(random_unit_norm::<T>(rows, cols, 1, seed)?.into_entries())
}

/// Regenerates the dictionary described by `spec`.
///
/// Kronecker specs use a random unit-norm `P` of size `(n/m) × (p/m)` and a
/// square random orthogonal `Q` of size `m × m`.
pub fn generate<T: Real>(spec: &DictGenSpec) -> Result<Dictionary<T>> {
    let DictGenSpec {
        n,
        p,
        m,
        seed,
        multiplier,
        kind,
    } = *spec;
    if m == 0 || p % m != 0 {
        return Err(Error::input(format!("block size {m} does not divide p = {p}")));
    }
    if multiplier == 0 {
        return Err(Error::input("spectral multiplier must be at least 1"));
    }
    match kind {
        DictKind::RandomUnitNorm => random_unit_norm(n, p, m, seed),
        DictKind::SpectralMultiplied => apply_spectral_multiplier(&random_unit_norm(n, p, m, seed)?, multiplier),
        DictKind::Kronecker => {
            if n % m != 0 {
                return Err(Error::input(format!("Kronecker dictionary needs m = {m} to divide n = {n}")));
            }
            let pf = random_unit_columns::<T>(n / m, p / m, crate::rng::mix64(&[seed, 0]))?;
            let qf = random_orthonormal_columns::<T>(m, m, crate::rng::mix64(&[seed, 1]))?;
            kronecker_dictionary(&pf, &qf)
        }
    }
}
