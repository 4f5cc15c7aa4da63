//! Monte Carlo checks on random block subdictionaries: how well conditioned
//! they are, and how large the masked hollow Gram matrix gets.

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{max_abs_eigenvalue, select_columns};
use crate::metrics::{dictionary_metrics, lemma1_bound, Dictionary};
use crate::rng::{mix64, stream, tags};
use crate::signals::sample_block_support;
use crate::{Error, Real, Result};

/// Enumerate subsets or masks instead of sampling when there are at most this many.
pub const EXHAUSTIVE_LIMIT: u128 = 10_000;

/// Default half-width of the singular-value interval `[√(1−ε), √(1+ε)]`.
pub const DEFAULT_EPSILON: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningTrial {
    pub trial: usize,
    pub seed: u64,
    pub k: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub within_interval: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    pub trials: usize,
    pub epsilon: f64,
    pub fraction_within: f64,
    pub worst_sigma_min: f64,
    pub worst_sigma_max: f64,
    pub k: usize,
    pub exhaustive: bool,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub records: Vec<ConditioningTrial>,
}

/// Columns of the blocks in `support`, in ascending block order.
pub fn extract_block_subdictionary<T: Real>(d: &Dictionary<T>, support: &[usize]) -> Result<DMatrix<T>> {
    if let Some(&bad) = support.iter().find(|&&b| b >= d.num_blocks()) {
        return Err(Error::input(format!(
            "block {bad} out of range for {} blocks",
            d.num_blocks()
        )));
    }
    let mut blocks = support.to_vec();
    blocks.sort_unstable();
    Ok(select_columns(d.entries(), &d.block_columns(&blocks)))
}

/// `(σ_min, σ_max)` of `x`; `σ_min = 0` when `x` has more columns than rows.
pub fn singular_extrema<T: Real>(x: &DMatrix<T>) -> Result<(T, T)> {
    if x.is_empty() {
        return Err(Error::input("singular extrema of an empty matrix"));
    }
    let s = x.clone().singular_values();
    let smax = s.iter().fold(T::zero(), |a, v| a.max(*v));
    let smin = if x.ncols() > x.nrows() {
        T::zero()
    } else {
        s.iter().fold(T::infinity(), |a, v| a.min(*v))
    };
    Ok((smin, smax))
}

/// Binomial coefficient, saturating.
pub(crate) fn choose(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Samples `trials` uniform `k`-block subsets (or enumerates all of them when
/// there are at most [`EXHAUSTIVE_LIMIT`]) and records how many subdictionaries
/// have every singular value in `[√(1−ε), √(1+ε)]`.
pub fn monte_carlo_conditioning<T: Real>(
    d: &Dictionary<T>,
    k: usize,
    trials: usize,
    epsilon: f64,
    master_seed: u64,
) -> Result<ConditioningReport> {
    let r = d.num_blocks();
    if k > r {
        return Err(Error::input(format!("k = {k} exceeds the {r} available blocks")));
    }
    if trials == 0 {
        return Err(Error::input("at least one trial is required"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::input(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let exhaustive = choose(r, k) <= EXHAUSTIVE_LIMIT;
    conditioning_report(d, k, trials, epsilon, master_seed, exhaustive)
}

pub(crate) fn conditioning_report<T: Real>(
    d: &Dictionary<T>,
    k: usize,
    trials: usize,
    epsilon: f64,
    master_seed: u64,
    exhaustive: bool,
) -> Result<ConditioningReport> {
    let r = d.num_blocks();
    let mut warnings = Vec::new();
    if k * d.block_size() > d.n() {
        warnings.push(format!(
            "k*m = {} exceeds n = {}: subdictionaries cannot have full column rank",
            k * d.block_size(),
            d.n()
        ));
    }
    let work: Vec<(u64, Vec<usize>)> = if exhaustive {
        (0..r).combinations(k).map(|s| (0, s)).collect()
    } else {
        (0..trials)
            .map(|t| {
                let seed = mix64(&[master_seed, tags::SUBSET, k as u64, t as u64]);
                let s = sample_block_support(r, k, &mut stream(seed)).expect("k <= r checked");
                (seed, s)
            })
            .collect()
    };
    let lo = (1.0 - epsilon).sqrt();
    let hi = (1.0 + epsilon).sqrt();
    let records: Vec<ConditioningTrial> = work
        .into_par_iter()
        .enumerate()
        .map(|(trial, (seed, support))| -> Result<ConditioningTrial> {
            let (smin, smax) = if support.is_empty() {
                // An empty subdictionary has no singular values to violate the interval.
                (1.0, 1.0)
            } else {
                let x = extract_block_subdictionary(d, &support)?;
                let (a, b) = singular_extrema(&x)?;
                (a.as_f64(), b.as_f64())
            };
            Ok(ConditioningTrial {
                trial,
                seed,
                k,
                sigma_min: smin,
                sigma_max: smax,
                within_interval: smin >= lo && smax <= hi,
            })
        })
        .collect::<Result<_>>()?;
    let count = records.len();
    let within = records.iter().filter(|t| t.within_interval).count();
    Ok(ConditioningReport {
        trials: count,
        epsilon,
        fraction_within: within as f64 / count as f64,
        worst_sigma_min: records.iter().map(|t| t.sigma_min).fold(f64::INFINITY, f64::min),
        worst_sigma_max: records.iter().map(|t| t.sigma_max).fold(f64::NEG_INFINITY, f64::max),
        k,
        exhaustive,
        warnings,
        records,
    })
}

/// `Φ*Φ − Id`, with the diagonal set to exactly zero.
pub fn hollow_gram<T: Real>(d: &Dictionary<T>) -> DMatrix<T> {
    let mut g = d.entries().tr_mul(d.entries());
    g.fill_diagonal(T::zero());
    g
}

/// `‖RGR‖₂` for the block mask `mask` (one flag per block): the spectral norm
/// of the principal submatrix of `g` on the retained blocks.
pub fn masked_norm<T: Real>(g: &DMatrix<T>, mask: &[bool], m: usize) -> T {
    let cols: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter(|(_, keep)| **keep)
        .flat_map(|(b, _)| b * m..(b + 1) * m)
        .collect();
    if cols.is_empty() {
        return T::zero();
    }
    let sub = DMatrix::from_fn(cols.len(), cols.len(), |i, j| g[(cols[i], cols[j])]);
    max_abs_eigenvalue(&sub)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Estimate {
    /// `(E ‖RGR‖₂^q)^{1/q}`.
    pub estimate: f64,
    pub bound: f64,
    pub q: f64,
    pub delta: f64,
    pub trials: usize,
    pub exhaustive: bool,
    /// Sampled norms (empty in exhaustive mode).
    #[serde(skip)]
    pub norms: Vec<f64>,
}

/// Log-sum-exp of `weights_ln[i] + q ln x[i]`, skipping zero norms.
fn log_moment(norms: &[f64], log_weights: &[f64], q: f64) -> f64 {
    let terms: Vec<f64> = norms
        .iter()
        .zip(log_weights)
        .filter(|(x, _)| **x > 0.0)
        .map(|(x, w)| w + q * x.ln())
        .collect();
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}

/// Estimates `E_q ‖RGR‖₂ = (E ‖RGR‖₂^q)^{1/q}`, `q = 4 ln p`, for Bernoulli(δ)
/// block masks, and pairs it with the analytical bound. The moment is averaged
/// in log space. When `2^r ≤` [`EXHAUSTIVE_LIMIT`] every mask is enumerated and
/// weighted by its probability instead.
pub fn empirical_lemma1<T: Real>(d: &Dictionary<T>, delta: f64, trials: usize, master_seed: u64) -> Result<Lemma1Estimate> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::input(format!("delta must lie in (0, 1], got {delta}")));
    }
    if trials == 0 {
        return Err(Error::input("at least one trial is required"));
    }
    let p = d.p();
    if p < 2 {
        return Err(Error::input("p must be at least 2"));
    }
    let metrics = dictionary_metrics(d)?;
    let bound = lemma1_bound(&metrics, T::lit(delta), T::from_count(p))?.as_f64();
    let q = 4.0 * (p as f64).ln();
    let g = hollow_gram(d);
    let r = d.num_blocks();
    let m = d.block_size();
    let exhaustive = r < 127 && (1u128 << r) <= EXHAUSTIVE_LIMIT;
    if exhaustive {
        let masks: Vec<Vec<bool>> = (0..(1usize << r))
            .map(|bits| (0..r).map(|b| bits >> b & 1 == 1).collect())
            .collect();
        let (norms, log_w): (Vec<f64>, Vec<f64>) = masks
            .par_iter()
            .map(|mask| {
                let kept = mask.iter().filter(|b| **b).count();
                let lw = kept as f64 * delta.ln() + (r - kept) as f64 * (1.0 - delta).ln();
                (masked_norm(&g, mask, m).as_f64(), lw)
            })
            .unzip();
        let lm = log_moment(&norms, &log_w, q);
        return Ok(Lemma1Estimate {
            estimate: (lm / q).exp(),
            bound,
            q,
            delta,
            trials: masks.len(),
            exhaustive,
            norms: Vec::new(),
        });
    }
    let norms: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(mix64(&[master_seed, tags::MASK, t as u64]));
            let mask: Vec<bool> = (0..r).map(|_| rng.random_bool(delta)).collect();
            masked_norm(&g, &mask, m).as_f64()
        })
        .collect();
    let lw = vec![-(trials as f64).ln(); trials];
    let lm = log_moment(&norms, &lw, q);
    Ok(Lemma1Estimate {
        estimate: (lm / q).exp(),
        bound,
        q,
        delta,
        trials,
        exhaustive,
        norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictgen::random_unit_norm;
    use crate::linalg::exact_spectral_norm;
    use approx::assert_relative_eq;

    #[test]
    fn subdictionary_index_arithmetic() {
        let d = Dictionary::new(DMatrix::<f64>::identity(6, 6), 2).unwrap();
        let x = extract_block_subdictionary(&d, &[0, 2]).unwrap();
        let expect = select_columns(d.entries(), &[0, 1, 4, 5]);
        assert_eq!(x, expect);
        assert_eq!(extract_block_subdictionary(&d, &[0, 1, 2]).unwrap(), *d.entries());
        assert_eq!(extract_block_subdictionary(&d, &[]).unwrap().ncols(), 0);
        assert!(extract_block_subdictionary(&d, &[3]).is_err());
    }

    #[test]
    fn extrema_examples() {
        let id = DMatrix::<f64>::identity(3, 2);
        let (a, b) = singular_extrema(&id).unwrap();
        assert_relative_eq!(a, 1.0, epsilon = 1e-14);
        assert_relative_eq!(b, 1.0, epsilon = 1e-14);
        let diag = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let (a, b) = singular_extrema(&diag).unwrap();
        assert_relative_eq!(a, 2.0, epsilon = 1e-14);
        assert_relative_eq!(b, 3.0, epsilon = 1e-14);
        assert!(singular_extrema(&DMatrix::<f64>::zeros(0, 0)).is_err());
    }

    #[test]
    fn extrema_match_gram_eigenvalues() {
        // Independent route: square roots of the eigenvalues of X*X.
        let x = random_unit_norm::<f64>(6, 4, 1, 8).unwrap().into_entries();
        let eig = nalgebra::SymmetricEigen::new(x.tr_mul(&x)).eigenvalues;
        let lo = eig.iter().copied().fold(f64::INFINITY, f64::min).sqrt();
        let hi = eig.iter().copied().fold(0.0, f64::max).sqrt();
        let (a, b) = singular_extrema(&x).unwrap();
        assert!((a - lo).abs() <= 1e-10 && (b - hi).abs() <= 1e-10);
    }

    #[test]
    fn orthogonal_dictionary_is_perfectly_conditioned() {
        let d = Dictionary::new(DMatrix::<f64>::identity(12, 12), 3).unwrap();
        for k in 1..=4 {
            let rep = monte_carlo_conditioning(&d, k, 20, 0.5, 1).unwrap();
            assert_eq!(rep.fraction_within, 1.0);
            assert_relative_eq!(rep.worst_sigma_min, 1.0, epsilon = 1e-12);
            assert_relative_eq!(rep.worst_sigma_max, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn exhaustive_mode_matches_brute_force() {
        let d = random_unit_norm::<f64>(8, 10, 2, 3).unwrap();
        let rep = monte_carlo_conditioning(&d, 2, 7, 0.5, 99).unwrap();
        assert!(rep.exhaustive);
        assert_eq!(rep.trials, 10);
        let mut within = 0;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for a in 0..5 {
            for b in (a + 1)..5 {
                let cols = [2 * a, 2 * a + 1, 2 * b, 2 * b + 1];
                let x = select_columns(d.entries(), &cols);
                let s = x.singular_values();
                let smin = s.min();
                let smax = s.max();
                lo = lo.min(smin);
                hi = hi.max(smax);
                if smin >= 0.5f64.sqrt() && smax <= 1.5f64.sqrt() {
                    within += 1;
                }
            }
        }
        assert_eq!(rep.fraction_within, within as f64 / 10.0);
        assert_relative_eq!(rep.worst_sigma_min, lo, epsilon = 1e-12);
        assert_relative_eq!(rep.worst_sigma_max, hi, epsilon = 1e-12);
        // Sampling mode over the same space agrees in its invariants.
        let sampled = conditioning_report(&d, 2, 200, 0.5, 4, false).unwrap();
        assert!(sampled.worst_sigma_min >= lo - 1e-12 && sampled.worst_sigma_max <= hi + 1e-12);
    }

    #[test]
    fn rank_deficiency_is_flagged() {
        let d = random_unit_norm::<f64>(4, 12, 2, 3).unwrap();
        let rep = monte_carlo_conditioning(&d, 3, 10, 0.5, 1).unwrap();
        assert!(!rep.warnings.is_empty());
        assert_eq!(rep.worst_sigma_min, 0.0);
        assert_eq!(rep.fraction_within, 0.0);
    }

    #[test]
    fn bad_arguments() {
        let d = random_unit_norm::<f64>(4, 12, 2, 3).unwrap();
        assert!(monte_carlo_conditioning(&d, 7, 10, 0.5, 1).is_err());
        assert!(monte_carlo_conditioning(&d, 1, 0, 0.5, 1).is_err());
        assert!(monte_carlo_conditioning(&d, 1, 1, 1.5, 1).is_err());
        assert!(empirical_lemma1(&d, 0.0, 10, 1).is_err());
        assert!(empirical_lemma1(&d, 1.5, 10, 1).is_err());
    }

    #[test]
    fn hollow_gram_matches_triple_loop() {
        let d = random_unit_norm::<f64>(4, 6, 2, 17).unwrap();
        let g = hollow_gram(&d);
        let e = d.entries();
        for i in 0..6 {
            assert_eq!(g[(i, i)], 0.0);
            for j in 0..6 {
                let mut acc = 0.0;
                for row in 0..4 {
                    acc += e[(row, i)] * e[(row, j)];
                }
                if i == j {
                    acc -= 1.0;
                }
                assert!((g[(i, j)] - acc).abs() <= 1e-12);
            }
        }
        let id = Dictionary::new(DMatrix::<f64>::identity(5, 5), 1).unwrap();
        assert!(hollow_gram(&id).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lemma1_full_mask_and_orthonormal_cases() {
        let d = random_unit_norm::<f64>(20, 200, 2, 5).unwrap();
        let est = empirical_lemma1(&d, 1.0, 5, 1).unwrap();
        let g_norm = exact_spectral_norm(&hollow_gram(&d));
        assert_relative_eq!(est.estimate, g_norm, max_relative = 1e-9);
        for v in &est.norms {
            assert_relative_eq!(*v, g_norm, max_relative = 1e-9);
        }
        let id = Dictionary::new(DMatrix::<f64>::identity(8, 8), 1).unwrap();
        assert_eq!(empirical_lemma1(&id, 0.5, 10, 1).unwrap().estimate, 0.0);
    }

    #[test]
    fn lemma1_monte_carlo_converges_to_exhaustive() {
        // r = 6 blocks: sampling mode against the probability-weighted sum over 64 masks.
        let d = random_unit_norm::<f64>(8, 12, 2, 31).unwrap();
        let g = hollow_gram(&d);
        let delta: f64 = 0.5;
        let q = 4.0 * 12f64.ln();
        let mut exact = 0.0;
        for bits in 0..64usize {
            let mask: Vec<bool> = (0..6).map(|b| bits >> b & 1 == 1).collect();
            let kept = mask.iter().filter(|x| **x).count() as i32;
            let w = delta.powi(kept) * (1.0 - delta).powi(6 - kept);
            exact += w * masked_norm(&g, &mask, 2).powf(q);
        }
        let ex = empirical_lemma1(&d, delta, 1, 0).unwrap();
        assert!(ex.exhaustive);
        assert_relative_eq!(ex.estimate, exact.powf(1.0 / q), max_relative = 1e-10);

        let trials = 20_000;
        let mc = conditioning_free_lemma1(&d, delta, trials, 77);
        let samples: Vec<f64> = mc.iter().map(|x| x.powf(q)).collect();
        let mean = samples.iter().sum::<f64>() / trials as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (trials as f64 - 1.0);
        let se = (var / trials as f64).sqrt();
        assert!((mean - exact).abs() <= 3.0 * se, "mean {mean} exact {exact} se {se}");
    }

    /// Sampling-mode norms regardless of `r` (the public entry point would enumerate here).
    fn conditioning_free_lemma1(d: &Dictionary<f64>, delta: f64, trials: usize, seed: u64) -> Vec<f64> {
        let g = hollow_gram(d);
        (0..trials)
            .map(|t| {
                let mut rng = stream(mix64(&[seed, tags::MASK, t as u64]));
                let mask: Vec<bool> = (0..d.num_blocks()).map(|_| rng.random_bool(delta)).collect();
                masked_norm(&g, &mask, d.block_size())
            })
            .collect()
    }

    #[test]
    fn choose_values() {
        assert_eq!(choose(5, 2), 10);
        assert_eq!(choose(100, 2), 4950);
        assert_eq!(choose(3, 5), 0);
        assert!(choose(100, 8) > EXHAUSTIVE_LIMIT);
    }
}
