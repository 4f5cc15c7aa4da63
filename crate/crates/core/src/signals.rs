//! Block-sparse coefficient vectors and their (noisy) observations.

use nalgebra::DVector;
use rand::Rng;

use crate::metrics::Dictionary;
use crate::rng::{standard_normal, stream, StreamRng};
use crate::{Error, Real, Result};

/// A coefficient vector with exactly `support.len()` nonzero blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparseSignal<T: Real> {
    pub beta: DVector<T>,
    pub block_size: usize,
    /// Zero-based block indices, ascending.
    pub support: Vec<usize>,
    pub seed: u64,
}

impl<T: Real> BlockSparseSignal<T> {
    pub fn num_blocks(&self) -> usize {
        self.beta.len() / self.block_size
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T: Real> {
    pub y: DVector<T>,
    pub sigma: T,
    pub noise_seed: u64,
}

/// Fills one nonzero block. The default draws i.i.d. standard normals; other
/// implementations may correlate entries within a block.
pub trait BlockSampler<T: Real> {
    fn fill_block(&mut self, rng: &mut StreamRng, block: usize, out: &mut [T]);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianBlocks;

impl<T: Real> BlockSampler<T> for GaussianBlocks {
    fn fill_block(&mut self, rng: &mut StreamRng, _block: usize, out: &mut [T]) {
        for v in out {
            *v = standard_normal(rng);
        }
    }
}

/// Uniformly random `k`-subset of `0..r` by a partial Fisher-Yates shuffle, sorted.
pub fn sample_block_support<R: Rng + ?Sized>(r: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k > r {
        return Err(Error::input(format!("cannot choose {k} blocks out of {r}")));
    }
    let mut idx: Vec<usize> = (0..r).collect();
    for i in 0..k {
        let j = rng.random_range(i..r);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}

/// Fills the blocks in `support` with `sampler`; all other blocks are exactly zero.
pub fn sample_signal_with<T: Real, S: BlockSampler<T>>(
    support: &[usize],
    m: usize,
    r: usize,
    seed: u64,
    rng: &mut StreamRng,
    sampler: &mut S,
) -> Result<BlockSparseSignal<T>> {
    if m == 0 {
        return Err(Error::input("block size must be positive"));
    }
    if let Some(&bad) = support.iter().find(|&&b| b >= r) {
        return Err(Error::input(format!("support block {bad} out of range for {r} blocks")));
    }
    let mut support = support.to_vec();
    support.sort_unstable();
    support.dedup();
    let mut beta = DVector::zeros(r * m);
    for &b in &support {
        let block = &mut beta.as_mut_slice()[b * m..(b + 1) * m];
        sampler.fill_block(rng, b, block);
        if block.iter().all(|v| *v == T::zero()) {
            return Err(Error::input(format!("sampler produced an all-zero block {b}")));
        }
    }
    Ok(BlockSparseSignal {
        beta,
        block_size: m,
        support,
        seed,
    })
}

/// Gaussian block-sparse signal on a given support.
pub fn sample_signal<T: Real>(support: &[usize], m: usize, r: usize, rng: &mut StreamRng) -> Result<BlockSparseSignal<T>> {
    sample_signal_with(support, m, r, 0, rng, &mut GaussianBlocks)
}

/// Draws a uniform `k`-block support and Gaussian entries from one seeded stream.
pub fn random_signal<T: Real>(r: usize, k: usize, m: usize, seed: u64) -> Result<BlockSparseSignal<T>> {
    let mut rng = stream(seed);
    let support = sample_block_support(r, k, &mut rng)?;
    let mut s = sample_signal_with(&support, m, r, seed, &mut rng, &mut GaussianBlocks)?;
    s.seed = seed;
    Ok(s)
}

/// `y = Φβ + σ g` with `g` standard normal drawn from `noise_seed`.
pub fn observe<T: Real>(d: &Dictionary<T>, s: &BlockSparseSignal<T>, sigma: T, noise_seed: u64) -> Result<Observation<T>> {
    if s.beta.len() != d.p() {
        return Err(Error::input(format!(
            "signal length {} does not match dictionary width {}",
            s.beta.len(),
            d.p()
        )));
    }
    if !(sigma >= T::zero()) {
        return Err(Error::input("noise level must be non-negative"));
    }
    let mut y = d.entries() * &s.beta;
    if sigma > T::zero() {
        let mut rng = stream(noise_seed);
        for v in y.iter_mut() {
            *v += sigma * standard_normal::<T, _>(&mut rng);
        }
    }
    Ok(Observation { y, sigma, noise_seed })
}

/// Noise level with `‖β‖₂² / (n σ²) = target_snr`.
pub fn calibrate_noise<T: Real>(d: &Dictionary<T>, s: &BlockSparseSignal<T>, target_snr: T) -> Result<T> {
    calibrate_noise_energy(d.n(), s.beta.norm_squared(), target_snr)
}

/// [`calibrate_noise`] from a signal energy `‖β‖₂²` directly.
pub fn calibrate_noise_energy<T: Real>(n: usize, energy: T, target_snr: T) -> Result<T> {
    if !(energy > T::zero()) {
        return Err(Error::input("cannot calibrate noise for a zero signal"));
    }
    if !(target_snr > T::zero()) {
        return Err(Error::input("target SNR must be positive"));
    }
    Ok((energy / (T::from_count(n) * target_snr)).sqrt())
}
