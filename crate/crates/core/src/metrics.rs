//! Dictionary measures: coherence, intra-/inter-block coherence, spectral
//! norm, and the block incoherence condition built from them.

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

use crate::linalg::{self, ensure_finite, exact_spectral_norm};
use crate::{Error, Real, Result};

/// Column norms must be within this distance of one after construction.
pub const UNIT_NORM_TOL: f64 = 1e-10;

/// An `n × p` matrix whose columns are partitioned into `r` consecutive blocks of `m` columns.
///
/// Columns always have unit ℓ2 norm; the constructors normalize.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary<T: Real> {
    entries: DMatrix<T>,
    block_size: usize,
    num_blocks: usize,
}

impl<T: Real> Dictionary<T> {
    /// Builds a dictionary, scaling every column to unit norm.
    pub fn new(entries: DMatrix<T>, block_size: usize) -> Result<Self> {
        Self::with_renormalized_count(entries, block_size).map(|(d, _)| d)
    }

    /// Like [`Dictionary::new`], also returning how many columns were off unit norm
    /// by more than [`UNIT_NORM_TOL`] before normalization.
    pub fn with_renormalized_count(mut entries: DMatrix<T>, block_size: usize) -> Result<(Self, usize)> {
        let (n, p) = entries.shape();
        if n == 0 || p == 0 {
            return Err(Error::input(format!("dictionary must be nonempty, got {n}x{p}")));
        }
        if block_size == 0 {
            return Err(Error::input("block size must be positive"));
        }
        if p % block_size != 0 {
            return Err(Error::input(format!(
                "column count {p} is not divisible by block size {block_size}"
            )));
        }
        ensure_finite(&entries, "dictionary")?;
        let tol = T::lit(UNIT_NORM_TOL);
        let mut off = 0;
        for (j, mut col) in entries.column_iter_mut().enumerate() {
            let norm = col.norm();
            if norm == T::zero() {
                return Err(Error::input(format!("column {j} is zero and cannot be normalized")));
            }
            if (norm - T::one()).abs() > tol {
                off += 1;
            }
            col /= norm;
        }
        Ok((
            Dictionary {
                entries,
                block_size,
                num_blocks: p / block_size,
            },
            off,
        ))
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<T> {
        self.entries
    }

    /// Number of rows `n`.
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Number of columns `p`.
    pub fn p(&self) -> usize {
        self.entries.ncols()
    }

    /// Block size `m`.
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Number of blocks `r`.
    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn block(&self, i: usize) -> DMatrixView<'_, T> {
        self.entries.columns(i * self.block_size, self.block_size)
    }

    /// Same entries regrouped with a different block size.
    pub fn reblocked(&self, block_size: usize) -> Result<Self> {
        if block_size == 0 || self.p() % block_size != 0 {
            return Err(Error::input(format!(
                "column count {} is not divisible by block size {block_size}",
                self.p()
            )));
        }
        Ok(Dictionary {
            entries: self.entries.clone(),
            block_size,
            num_blocks: self.p() / block_size,
        })
    }

    /// Column indices covered by the given blocks, in the order given.
    pub fn block_columns(&self, blocks: &[usize]) -> Vec<usize> {
        let m = self.block_size;
        blocks.iter().flat_map(|&b| b * m..(b + 1) * m).collect()
    }
}

/// Measured quantities of a dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictionaryMetrics<T> {
    pub coherence: T,
    #[serde(rename = "mu_I")]
    pub intra_block: T,
    #[serde(rename = "mu_B")]
    pub inter_block: T,
    pub spectral_norm: T,
}

/// Constants of the block incoherence condition and the sparsity budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicConstants<T> {
    pub c0: T,
    pub c1: T,
    pub c2: T,
}

impl<T: Real> Default for BicConstants<T> {
    fn default() -> Self {
        BicConstants {
            c0: T::one(),
            c1: T::one(),
            c2: T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicVerdict<T> {
    pub satisfied: bool,
    pub c0: T,
    pub c1: T,
    pub c2: T,
    pub sparsity_budget_k: u64,
}

/// Maximum absolute inner product between distinct columns.
pub fn coherence<T: Real>(d: &Dictionary<T>) -> Result<T> {
    if d.p() < 2 {
        return Err(Error::input("coherence needs at least two columns"));
    }
    Ok(gram_sweep(d, false).coherence)
}

/// `max_i ‖Φ_i*Φ_i − Id‖₂`.
pub fn intra_block_coherence<T: Real>(d: &Dictionary<T>) -> T {
    let m = d.block_size();
    if m == 1 {
        return T::zero();
    }
    (0..d.num_blocks())
        .map(|i| {
            let b = d.block(i);
            hollow_block_norm(b.tr_mul(&b))
        })
        .fold(T::zero(), |a, v| a.max(v))
}

/// `max_{i≠j} ‖Φ_i*Φ_j‖₂`.
pub fn inter_block_coherence<T: Real>(d: &Dictionary<T>) -> Result<T> {
    if d.num_blocks() < 2 {
        return Err(Error::input("inter-block coherence undefined for a single block"));
    }
    Ok(gram_sweep(d, true).inter_block)
}

/// All four measures with one sweep over the Gram matrix.
pub fn dictionary_metrics<T: Real>(d: &Dictionary<T>) -> Result<DictionaryMetrics<T>> {
    let sweep = gram_sweep(d, d.num_blocks() >= 2);
    Ok(DictionaryMetrics {
        coherence: sweep.coherence,
        intra_block: intra_block_coherence(d),
        inter_block: sweep.inter_block,
        spectral_norm: linalg::spectral_norm(d.entries(), T::lit(linalg::SPECTRAL_TOL))?,
    })
}

struct Sweep<T> {
    coherence: T,
    inter_block: T,
}

/// Walks the upper block triangle of `Φ*Φ` one block row at a time so the full
/// `p × p` Gram matrix is never held in memory.
fn gram_sweep<T: Real>(d: &Dictionary<T>, with_blocks: bool) -> Sweep<T> {
    let m = d.block_size();
    let r = d.num_blocks();
    let mut coh = T::zero();
    let mut inter = T::zero();
    for i in 0..r {
        let bi = d.block(i);
        let tail = d.entries().columns(i * m, d.p() - i * m);
        let row = bi.tr_mul(&tail);
        // Within-block off-diagonal entries.
        for a in 0..m {
            for b in (a + 1)..m {
                coh = coh.max(row[(a, b)].abs());
            }
        }
        for j in 1..(r - i) {
            let g = row.columns(j * m, m);
            let entry_max = g.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
            coh = coh.max(entry_max);
            if with_blocks {
                let s = if m == 1 {
                    entry_max
                } else {
                    exact_spectral_norm(&g.into_owned())
                };
                inter = inter.max(s);
            }
        }
    }
    Sweep {
        coherence: coh,
        inter_block: inter,
    }
}

/// Spectral norm of a block Gram with its diagonal treated as exactly one
/// (unit-norm columns), i.e. of the hollow block.
fn hollow_block_norm<T: Real>(mut g: DMatrix<T>) -> T {
    g.fill_diagonal(T::zero());
    exact_spectral_norm(&g)
}

/// `max_i ‖M_i‖₂` over column blocks of width `block_cols`.
pub fn block_norm_b1<T: Real>(m: &DMatrix<T>, block_cols: usize) -> Result<T> {
    if block_cols == 0 || m.ncols() % block_cols != 0 {
        return Err(Error::input(format!(
            "column count {} is not divisible by block size {block_cols}",
            m.ncols()
        )));
    }
    Ok((0..m.ncols() / block_cols)
        .map(|i| exact_spectral_norm(&m.columns(i * block_cols, block_cols).into_owned()))
        .fold(T::zero(), |a, v| a.max(v)))
}

/// `max_{i,j} ‖M_{ij}‖₂` over `block_rows × block_cols` subblocks.
pub fn block_norm_b2<T: Real>(m: &DMatrix<T>, block_rows: usize, block_cols: usize) -> Result<T> {
    if block_rows == 0 || block_cols == 0 || m.nrows() % block_rows != 0 || m.ncols() % block_cols != 0 {
        return Err(Error::input(format!(
            "{}x{} matrix cannot be tiled by {block_rows}x{block_cols} blocks",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut best = T::zero();
    for i in 0..m.nrows() / block_rows {
        for j in 0..m.ncols() / block_cols {
            let sub = m.view((i * block_rows, j * block_cols), (block_rows, block_cols));
            best = best.max(exact_spectral_norm(&sub.into_owned()));
        }
    }
    Ok(best)
}

/// Evaluates the block incoherence condition and the sparsity budget
/// `floor(c0 · r / (‖Φ‖₂² · ln p))`.
pub fn check_bic<T: Real>(
    metrics: &DictionaryMetrics<T>,
    p: usize,
    r: usize,
    constants: BicConstants<T>,
) -> Result<BicVerdict<T>> {
    let BicConstants { c0, c1, c2 } = constants;
    if p < 2 {
        return Err(Error::input("BIC needs p >= 2"));
    }
    if !(c0 > T::zero() && c1 > T::zero() && c2 > T::zero()) {
        return Err(Error::input("BIC constants must be positive"));
    }
    let log_p = T::from_count(p).ln();
    let satisfied = metrics.intra_block <= c1 && metrics.inter_block <= c2 / log_p;
    let norm_sq = metrics.spectral_norm * metrics.spectral_norm;
    let budget = c0 * T::from_count(r) / (norm_sq * log_p);
    let sparsity_budget_k = if budget.is_finite() && budget > T::zero() {
        budget.floor().as_f64() as u64
    } else if budget.is_finite() {
        0
    } else {
        u64::MAX
    };
    Ok(BicVerdict {
        satisfied,
        c0,
        c1,
        c2,
        sparsity_budget_k,
    })
}

/// Right-hand side of the moment bound on `E_q ‖RGR‖₂`:
/// `48 μ_B ln p + 17 sqrt(δ ln p (1 + μ_I)) ‖Φ‖₂ + 2 δ ‖Φ‖₂² + 3 μ_I`.
///
/// `p` is taken as a real so the bound can be evaluated off the integer grid.
pub fn lemma1_bound<T: Real>(metrics: &DictionaryMetrics<T>, delta: T, p: T) -> Result<T> {
    if !(delta >= T::zero() && delta <= T::one()) {
        return Err(Error::input(format!("delta must lie in [0, 1], got {delta}")));
    }
    if !(p > T::one()) {
        return Err(Error::input("p must exceed 1 so that ln p > 0"));
    }
    let log_p = p.ln();
    let norm = metrics.spectral_norm;
    Ok(T::lit(48.0) * metrics.inter_block * log_p
        + T::lit(17.0) * (delta * log_p * (T::one() + metrics.intra_block)).sqrt() * norm
        + T::lit(2.0) * delta * norm * norm
        + T::lit(3.0) * metrics.intra_block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dict(rows: usize, cols: usize, vals: &[f64], m: usize) -> Dictionary<f64> {
        Dictionary::new(DMatrix::from_row_slice(rows, cols, vals), m).unwrap()
    }

    #[test]
    fn constructor_normalizes_and_counts() {
        let (d, off) =
            Dictionary::with_renormalized_count(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]), 1).unwrap();
        assert_eq!(off, 1);
        assert_eq!(d.entries()[(0, 0)], 1.0);
        assert!(Dictionary::new(DMatrix::<f64>::zeros(2, 2), 1).is_err());
        assert!(Dictionary::new(DMatrix::<f64>::identity(2, 3), 2).is_err());
        assert!(Dictionary::new(DMatrix::<f64>::identity(2, 2), 0).is_err());
    }

    #[test]
    fn coherence_examples() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d = dict(2, 2, &[1.0, s, 0.0, s], 1);
        assert_relative_eq!(coherence(&d).unwrap(), s, epsilon = 1e-15);
        let id = Dictionary::new(DMatrix::<f64>::identity(4, 4), 2).unwrap();
        assert_eq!(coherence(&id).unwrap(), 0.0);
        assert_eq!(intra_block_coherence(&id), 0.0);
        assert_eq!(inter_block_coherence(&id).unwrap(), 0.0);
        let single = Dictionary::new(DMatrix::<f64>::identity(1, 1), 1).unwrap();
        assert!(coherence(&single).is_err());
    }

    #[test]
    fn two_column_block_intra_coherence_is_inner_product() {
        // Eigenvalues of [[0,ρ],[ρ,0]] are ±ρ.
        let rho: f64 = -0.3;
        let d = dict(2, 2, &[1.0, rho, 0.0, (1.0 - rho * rho).sqrt()], 2);
        assert_relative_eq!(intra_block_coherence(&d), rho.abs(), epsilon = 1e-14);
    }

    #[test]
    fn single_block_has_no_inter_coherence() {
        let d = Dictionary::new(DMatrix::<f64>::identity(3, 3), 3).unwrap();
        assert!(inter_block_coherence(&d).is_err());
        let m = dictionary_metrics(&d).unwrap();
        assert_eq!(m.inter_block, 0.0);
    }

    #[test]
    fn block_norms() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(block_norm_b1(&id, 3).unwrap(), 1.0, epsilon = 1e-14);
        let m = DMatrix::from_row_slice(2, 3, &[3.0, 0.0, 1.0, 4.0, 1.0, 1.0]);
        assert_relative_eq!(block_norm_b1(&m, 1).unwrap(), 5.0, epsilon = 1e-14);
        assert!(block_norm_b1(&m, 2).is_err());
        let bd = DMatrix::<f64>::identity(4, 4);
        assert_relative_eq!(block_norm_b2(&bd, 2, 2).unwrap(), 1.0, epsilon = 1e-14);
        assert!(block_norm_b2(&m, 2, 2).is_err());
    }

    fn metrics(coh: f64, mi: f64, mb: f64, norm: f64) -> DictionaryMetrics<f64> {
        DictionaryMetrics {
            coherence: coh,
            intra_block: mi,
            inter_block: mb,
            spectral_norm: norm,
        }
    }

    #[test]
    fn bic_examples() {
        let c = BicConstants::default();
        let v = check_bic(&metrics(0.0, 0.0, 0.0, 1.0), 10, 5, c).unwrap();
        assert!(v.satisfied);
        let v = check_bic(&metrics(0.0, 2.0, 0.0, 1.0), 10, 5, c).unwrap();
        assert!(!v.satisfied);
        // Tight frame ‖Φ‖₂² = p/n with n=100, p=500, r=100: floor(n r / (p ln p)).
        let (n, p, r) = (100usize, 500usize, 100usize);
        let norm = (p as f64 / n as f64).sqrt();
        let v = check_bic(&metrics(0.1, 0.0, 0.0, norm), p, r, c).unwrap();
        let expect = ((n * r) as f64 / (p as f64 * (p as f64).ln())).floor() as u64;
        assert_eq!(v.sparsity_budget_k, expect);
        assert!(check_bic(&metrics(0.0, 0.0, 0.0, 1.0), 10, 5, BicConstants { c0: 0.0, c1: 1.0, c2: 1.0 }).is_err());
        assert!(check_bic(&metrics(0.0, 0.0, 0.0, 1.0), 1, 1, c).is_err());
    }

    #[test]
    fn bic_inter_block_threshold_uses_natural_log() {
        let c = BicConstants::default();
        let p = 100usize;
        let edge = 1.0 / (p as f64).ln();
        assert!(check_bic(&metrics(0.0, 0.0, edge * 0.999, 1.0), p, 10, c).unwrap().satisfied);
        assert!(!check_bic(&metrics(0.0, 0.0, edge * 1.001, 1.0), p, 10, c).unwrap().satisfied);
    }

    #[test]
    fn lemma1_examples() {
        let e = std::f64::consts::E;
        let zero = lemma1_bound(&metrics(0.0, 0.0, 0.0, 1.0), 0.0, e * e).unwrap();
        assert_eq!(zero, 0.0);
        let v = lemma1_bound(&metrics(0.0, 0.0, 1.0, 1.0), 1.0, e).unwrap();
        assert_relative_eq!(v, 67.0, epsilon = 1e-12);
        assert!(lemma1_bound(&metrics(0.0, 0.0, 0.0, 1.0), 1.5, e).is_err());
    }

    #[test]
    fn lemma1_matches_independent_arithmetic() {
        // Term-by-term evaluation written out separately.
        let (mb, mi, norm, delta, p) = (0.2973, 0.1992, 3.3963, 0.02, 5000.0f64);
        let l = p.ln();
        let t1 = 48.0 * mb * l;
        let t2 = 17.0 * (delta * l * (1.0 + mi)).sqrt() * norm;
        let t3 = 2.0 * delta * norm.powi(2);
        let t4 = 3.0 * mi;
        let got = lemma1_bound(&metrics(0.2, mi, mb, norm), delta, p).unwrap();
        assert_relative_eq!(got, t4 + t3 + t2 + t1, max_relative = 1e-14);
    }
}
