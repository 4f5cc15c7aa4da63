//! Monte Carlo harness for the two experiment families: noiseless recovery
//! phase transitions by ℓ2,1 basis pursuit, and group-lasso regression error
//! curves.
//!
//! Seeds: pool candidate `i` uses `mix64(master, POOL, i)` for every `τ`, so
//! the `τ` dictionaries are spectral edits of the same Gaussian draws. Trial
//! `t` at `(τ, k)` uses `mix64(master, τ, k, t)` regardless of the selection
//! rule, so min- and max-coherence runs see the same signals.

use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::{regression_certificate, regression_error_bound, CertMode};
use crate::conditioning::{extract_block_subdictionary, singular_extrema};
use crate::dictgen::{generate, DictGenSpec, DictKind};
use crate::io::{fmt_f64, write_atomic};
use crate::metrics::{coherence, dictionary_metrics, Dictionary};
use crate::rng::{mix64, tags};
use crate::signals::{calibrate_noise, observe, random_signal};
use crate::solvers::{detect_block_support, group_lasso, l21_basis_pursuit, SolverConfig, SupportThresholds};
use crate::{Error, Real, Result};

/// `σ_min(Φ_S)` must exceed this for a recovery to count.
pub const FULL_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    CoherenceNearest(f64),
    CoherenceMin,
    CoherenceMax,
}

impl Selection {
    pub fn label(&self) -> String {
        match self {
            Selection::CoherenceNearest(t) => format!("coherence_nearest({t})"),
            Selection::CoherenceMin => "coherence_min".to_string(),
            Selection::CoherenceMax => "coherence_max".to_string(),
        }
    }
}

/// How the noise level of a regression trial is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// `σ` from each trial's own `‖β‖₂²`, so `σ²` grows with `k`.
    PerTrial,
    /// `σ` from the expected energy `k m` of a `k`-block Gaussian signal at the
    /// given reference `k`, held fixed across the sweep.
    Reference { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// `‖β‖₂² / (n σ²)`.
    pub target_snr: f64,
    /// Defaults to `½ √(ln p)` (1.4592 at `p = 5000`).
    pub lambda: Option<f64>,
    pub calibration: Calibration,
    /// Fixed `σ`, bypassing calibration; `0` gives noiseless observations.
    pub sigma: Option<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            target_snr: 0.84,
            lambda: None,
            calibration: Calibration::PerTrial,
            sigma: None,
        }
    }
}

impl NoiseConfig {
    pub fn lambda_for(&self, p: usize) -> f64 {
        self.lambda.unwrap_or_else(|| 0.5 * (p as f64).ln().sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub k_sweep: Vec<usize>,
    pub multipliers: Vec<u32>,
    pub candidate_pool: usize,
    pub selection: Selection,
    pub trials_per_point: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub thresholds: SupportThresholds,
}

impl ExperimentConfig {
    /// n=100, p=500, m=5 (r=100), pool 50, 200 trials, k = 1..r/4, τ ∈ {1, 3}.
    pub fn desk() -> Self {
        ExperimentConfig {
            n: 100,
            p: 500,
            m: 5,
            k_sweep: (1..=25).collect(),
            multipliers: vec![1, 3],
            candidate_pool: 50,
            selection: Selection::CoherenceNearest(0.2),
            trials_per_point: 200,
            master_seed: 0,
            noise: None,
            solver: SolverConfig::default(),
            thresholds: SupportThresholds::default(),
        }
    }

    /// n=858, p=5000, m=10 (r=500), pool 2000, 1000 trials, τ ∈ {1,2,3,4}.
    /// Expect many hours on a workstation.
    pub fn paper_scale() -> Self {
        ExperimentConfig {
            n: 858,
            p: 5000,
            m: 10,
            k_sweep: (1..=125).collect(),
            multipliers: vec![1, 2, 3, 4],
            candidate_pool: 2000,
            trials_per_point: 1000,
            ..Self::desk()
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.p / self.m.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.p == 0 || self.p % self.m != 0 {
            return Err(Error::input(format!(
                "invalid dimensions n={}, p={}, m={}",
                self.n, self.p, self.m
            )));
        }
        let r = self.num_blocks();
        if let Some(k) = self.k_sweep.iter().find(|&&k| k > r) {
            return Err(Error::input(format!("k = {k} exceeds r = {r}")));
        }
        if self.k_sweep.is_empty() || self.multipliers.is_empty() {
            return Err(Error::input("k_sweep and multipliers must be nonempty"));
        }
        if self.multipliers.contains(&0) {
            return Err(Error::input("spectral multipliers must be at least 1"));
        }
        if self.trials_per_point == 0 || self.candidate_pool == 0 {
            return Err(Error::input("trials_per_point and candidate_pool must be at least 1"));
        }
        if let Some(noise) = &self.noise {
            if !(noise.target_snr > 0.0) || noise.lambda.is_some_and(|l| !(l > 0.0)) {
                return Err(Error::input("noise target_snr and lambda must be positive"));
            }
            if noise.sigma.is_some_and(|s| !(s >= 0.0)) {
                return Err(Error::input("fixed sigma must be non-negative"));
            }
        }
        self.solver.validate()
    }

    /// Candidate specs for multiplier `tau`.
    pub fn pool_specs(&self, tau: u32) -> Vec<DictGenSpec> {
        (0..self.candidate_pool)
            .map(|i| DictGenSpec {
                n: self.n,
                p: self.p,
                m: self.m,
                seed: mix64(&[self.master_seed, tags::POOL, i as u64]),
                multiplier: tau,
                kind: DictKind::SpectralMultiplied,
            })
            .collect()
    }

    pub fn trial_seed(&self, tau: u32, k: usize, trial: usize) -> u64 {
        mix64(&[self.master_seed, tau as u64, k as u64, trial as u64])
    }
}

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub tau: u32,
    pub selection: String,
    pub pool_index: usize,
    pub seed: u64,
    pub spectral_norm: f64,
    pub coherence: f64,
    #[serde(rename = "mu_B")]
    pub mu_b: f64,
    #[serde(rename = "mu_I")]
    pub mu_i: f64,
}

pub struct SelectedDictionary<T: Real> {
    pub dictionary: Dictionary<T>,
    pub spec: DictGenSpec,
    pub pool_index: usize,
    pub metrics: MetricsRow,
}

/// Generates every candidate, measures its coherence, and returns the pick.
/// Ties go to the lowest pool index.
pub fn select_dictionary<T: Real>(pool: &[DictGenSpec], selection: Selection) -> Result<SelectedDictionary<T>> {
    if pool.is_empty() {
        return Err(Error::input("empty candidate pool"));
    }
    let coh: Vec<f64> = pool
        .par_iter()
        .map(|s| coherence(&generate::<T>(s)?).map(|c| c.as_f64()))
        .collect::<Result<_>>()?;
    let key = |c: f64| match selection {
        Selection::CoherenceNearest(t) => (c - t).abs(),
        Selection::CoherenceMin => c,
        Selection::CoherenceMax => -c,
    };
    let mut best = 0;
    for (i, c) in coh.iter().enumerate() {
        if key(*c) < key(coh[best]) {
            best = i;
        }
    }
    let spec = pool[best];
    let dictionary = generate::<T>(&spec)?;
    let mt = dictionary_metrics(&dictionary)?;
    Ok(SelectedDictionary {
        metrics: MetricsRow {
            tau: spec.multiplier,
            selection: selection.label(),
            pool_index: best,
            seed: spec.seed,
            spectral_norm: mt.spectral_norm.as_f64(),
            coherence: mt.coherence.as_f64(),
            mu_b: mt.inter_block.as_f64(),
            mu_i: mt.intra_block.as_f64(),
        },
        dictionary,
        spec,
        pool_index: best,
    })
}

/// Exact support match with a numerically full-rank support submatrix.
pub fn recovery_success<T: Real>(
    beta_true: &DVector<T>,
    beta_hat: &DVector<T>,
    d: &Dictionary<T>,
    thresholds: SupportThresholds,
) -> Result<bool> {
    if beta_true.len() != beta_hat.len() || beta_true.len() != d.p() {
        return Err(Error::input("coefficient vectors must have length p"));
    }
    let m = d.block_size();
    let truth: Vec<usize> = (0..d.num_blocks())
        .filter(|&b| beta_true.rows(b * m, m).iter().any(|v| *v != T::zero()))
        .collect();
    if detect_block_support(beta_hat, m, thresholds) != truth {
        return Ok(false);
    }
    if truth.is_empty() {
        return Ok(true);
    }
    let (smin, _) = singular_extrema(&extract_block_subdictionary(d, &truth)?)?;
    Ok(smin.as_f64() > FULL_RANK_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Recovery,
    Regression,
}

/// One Monte Carlo trial. Recovery trials fill `success`; regression trials
/// fill the error, noise and certificate fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub tau: u32,
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    pub success: Option<bool>,
    /// `‖Φβ − Φβ̂‖₂²` for the reported (debiased) estimate.
    pub regression_error: Option<f64>,
    /// The same error for the penalized estimate before debiasing.
    pub penalized_error: Option<f64>,
    pub sigma: Option<f64>,
    pub sigma_min: Option<f64>,
    pub sigma_max: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Whether invertibility, orthogonality and complementary size all held.
    pub certified: Option<bool>,
    pub error_bound: Option<f64>,
}

/// Aggregate over the trials at one `(τ, k)`.
///
/// Recovery: `successes` counts recoveries and `stderr` is the binomial
/// standard error of `success_rate`. Regression: `successes` counts trials
/// whose certificate bundle held, `success_rate` is empty, and `stderr` is the
/// standard error of `mean_err`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub tau: u32,
    pub k: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: Option<f64>,
    pub mean_err: Option<f64>,
    pub stderr: f64,
    pub nonconverged: usize,
    pub median_err: Option<f64>,
    pub selection: String,
}

pub const SUMMARY_HEADER: [&str; 10] = [
    "tau",
    "k",
    "trials",
    "successes",
    "success_rate",
    "mean_err",
    "stderr",
    "nonconverged",
    "median_err",
    "selection",
];

pub const TRIALS_HEADER: [&str; 15] = [
    "tau",
    "k",
    "trial",
    "seed",
    "success",
    "regression_error",
    "penalized_error",
    "sigma",
    "sigma_min",
    "sigma_max",
    "converged",
    "iterations",
    "kkt_residual",
    "certified",
    "error_bound",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub rows: Vec<SummaryRow>,
    pub trials: Vec<TrialRecord>,
    pub metrics: Vec<MetricsRow>,
}

impl ExperimentOutput {
    pub fn row(&self, tau: u32, k: usize) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.tau == tau && r.k == k)
    }
}

/// Noiseless recovery by ℓ2,1 basis pursuit at every `(τ, k)`.
pub fn run_recovery_experiment<T: Real>(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_generic::<T>(config, ExperimentKind::Recovery)
}

/// Group-lasso regression with debiasing at every `(τ, k)`.
pub fn run_regression_experiment<T: Real>(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    if config.noise.is_none() {
        return Err(Error::input("regression experiments need a noise configuration"));
    }
    run_generic::<T>(config, ExperimentKind::Regression)
}

fn run_generic<T: Real>(config: &ExperimentConfig, kind: ExperimentKind) -> Result<ExperimentOutput> {
    config.validate()?;
    let mut metrics = Vec::new();
    let mut trials = Vec::new();
    for &tau in &config.multipliers {
        let sel = select_dictionary::<T>(&config.pool_specs(tau), config.selection)?;
        let work: Vec<(usize, usize)> = config
            .k_sweep
            .iter()
            .flat_map(|&k| (0..config.trials_per_point).map(move |t| (k, t)))
            .collect();
        let recs: Vec<TrialRecord> = work
            .into_par_iter()
            .map(|(k, t)| match kind {
                ExperimentKind::Recovery => recovery_trial(config, &sel.dictionary, tau, k, t),
                ExperimentKind::Regression => regression_trial(config, &sel.dictionary, tau, k, t),
            })
            .collect::<Result<_>>()?;
        trials.extend(recs);
        metrics.push(sel.metrics);
    }
    trials.sort_by_key(|r| (r.tau, r.k, r.trial));
    let rows = aggregate(&trials, kind, &config.selection.label());
    Ok(ExperimentOutput {
        kind,
        rows,
        trials,
        metrics,
    })
}

fn support_extrema<T: Real>(d: &Dictionary<T>, support: &[usize]) -> Result<(Option<f64>, Option<f64>)> {
    if support.is_empty() {
        return Ok((None, None));
    }
    let (a, b) = singular_extrema(&extract_block_subdictionary(d, support)?)?;
    Ok((Some(a.as_f64()), Some(b.as_f64())))
}

fn recovery_trial<T: Real>(config: &ExperimentConfig, d: &Dictionary<T>, tau: u32, k: usize, trial: usize) -> Result<TrialRecord> {
    let seed = config.trial_seed(tau, k, trial);
    let s = random_signal::<T>(d.num_blocks(), k, d.block_size(), mix64(&[seed, tags::SIGNAL]))?;
    let y = d.entries() * &s.beta;
    let (sigma_min, sigma_max) = support_extrema(d, &s.support)?;
    let (success, converged, iterations, kkt) = match l21_basis_pursuit(d, &y, &config.solver) {
        Ok(res) => {
            let ok = res.converged && recovery_success(&s.beta, &res.beta_hat, d, config.thresholds)?;
            (ok, res.converged, res.iterations, res.kkt_residual)
        }
        // A rank-deficient or inconsistent system is recorded as a failed trial.
        Err(Error::Infeasible(_)) => (false, false, 0, f64::INFINITY),
        Err(e) => return Err(e),
    };
    Ok(TrialRecord {
        tau,
        k,
        trial,
        seed,
        success: Some(success),
        regression_error: None,
        penalized_error: None,
        sigma: None,
        sigma_min,
        sigma_max,
        converged,
        iterations,
        kkt_residual: kkt,
        certified: None,
        error_bound: None,
    })
}

fn regression_trial<T: Real>(config: &ExperimentConfig, d: &Dictionary<T>, tau: u32, k: usize, trial: usize) -> Result<TrialRecord> {
    let noise = config.noise.expect("checked by caller");
    let seed = config.trial_seed(tau, k, trial);
    let (n, m) = (d.n(), d.block_size());
    let s = random_signal::<T>(d.num_blocks(), k, m, mix64(&[seed, tags::SIGNAL]))?;
    let sigma = match (noise.sigma, noise.calibration) {
        (Some(sig), _) => sig,
        (None, _) if k == 0 => 0.0,
        (None, Calibration::PerTrial) => calibrate_noise(d, &s, T::lit(noise.target_snr))?.as_f64(),
        (None, Calibration::Reference { k: k_ref }) => ((k_ref * m) as f64 / (n as f64 * noise.target_snr)).sqrt(),
    };
    let obs = observe(d, &s, T::lit(sigma), mix64(&[seed, tags::NOISE]))?;
    let lambda = noise.lambda_for(d.p());
    let solver = SolverConfig {
        debias: true,
        ..config.solver
    };
    let res = group_lasso(d, &obs.y, T::lit(lambda), T::lit(sigma), &solver)?;
    let clean = d.entries() * &s.beta;
    let err = |b: &DVector<T>| (&clean - d.entries() * b).norm_squared().as_f64();
    let z = &obs.y - &clean;
    let certified = if sigma > 0.0 {
        match regression_certificate(d, &s.support, &s.beta, &z, lambda, sigma, CertMode::Group) {
            Ok(rep) => rep.passed,
            Err(Error::RankDeficient { .. }) => false,
            Err(e) => return Err(e),
        }
    } else {
        false
    };
    let (sigma_min, sigma_max) = support_extrema(d, &s.support)?;
    Ok(TrialRecord {
        tau,
        k,
        trial,
        seed,
        success: None,
        regression_error: Some(err(&res.beta_hat)),
        penalized_error: Some(err(res.penalized_estimate())),
        sigma: Some(sigma),
        sigma_min,
        sigma_max,
        converged: res.converged,
        iterations: res.iterations,
        kkt_residual: res.kkt_residual,
        certified: Some(certified),
        error_bound: Some(regression_error_bound(lambda, sigma, m, k)),
    })
}

/// Groups sorted trial records by `(τ, k)` and aggregates each group in trial order.
pub fn aggregate(trials: &[TrialRecord], kind: ExperimentKind, selection: &str) -> Vec<SummaryRow> {
    let mut sorted: Vec<&TrialRecord> = trials.iter().collect();
    sorted.sort_by_key(|r| (r.tau, r.k, r.trial));
    let mut rows = Vec::new();
    for group in sorted.chunk_by(|a, b| (a.tau, a.k) == (b.tau, b.k)) {
        let count = group.len();
        let nonconverged = group.iter().filter(|r| !r.converged).count();
        let row = match kind {
            ExperimentKind::Recovery => {
                let successes = group.iter().filter(|r| r.success == Some(true)).count();
                let rate = successes as f64 / count as f64;
                SummaryRow {
                    tau: group[0].tau,
                    k: group[0].k,
                    trials: count,
                    successes,
                    success_rate: Some(rate),
                    mean_err: None,
                    stderr: (rate * (1.0 - rate) / count as f64).sqrt(),
                    nonconverged,
                    median_err: None,
                    selection: selection.to_string(),
                }
            }
            ExperimentKind::Regression => {
                let errs: Vec<f64> = group.iter().filter_map(|r| r.regression_error).collect();
                let mean = errs.iter().sum::<f64>() / errs.len() as f64;
                let var = if errs.len() > 1 {
                    errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (errs.len() - 1) as f64
                } else {
                    0.0
                };
                SummaryRow {
                    tau: group[0].tau,
                    k: group[0].k,
                    trials: count,
                    successes: group.iter().filter(|r| r.certified == Some(true)).count(),
                    success_rate: None,
                    mean_err: Some(mean),
                    stderr: (var / errs.len() as f64).sqrt(),
                    nonconverged,
                    median_err: Some(median(&errs)),
                    selection: selection.to_string(),
                }
            }
        };
        rows.push(row);
    }
    rows
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn opt_bool(v: Option<bool>) -> String {
    v.map(|b| b.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::input(format!("csv: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::input(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// `summary.csv`; header only when `rows` is empty.
pub fn format_summary_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.tau.to_string(),
            r.k.to_string(),
            r.trials.to_string(),
            r.successes.to_string(),
            opt(r.success_rate),
            opt(r.mean_err),
            fmt_f64(r.stderr),
            r.nonconverged.to_string(),
            opt(r.median_err),
            r.selection.clone(),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(w)
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != SUMMARY_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected summary header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        let bad = |what: &str| Error::Parse {
            line,
            msg: format!("bad {what}"),
        };
        let int = |j: usize, what: &str| rec[j].parse::<usize>().map_err(|_| bad(what));
        let float = |j: usize, what: &str| -> Result<Option<f64>> {
            if rec[j].is_empty() {
                Ok(None)
            } else {
                rec[j].parse::<f64>().map(Some).map_err(|_| bad(what))
            }
        };
        rows.push(SummaryRow {
            tau: rec[0].parse().map_err(|_| bad("tau"))?,
            k: int(1, "k")?,
            trials: int(2, "trials")?,
            successes: int(3, "successes")?,
            success_rate: float(4, "success_rate")?,
            mean_err: float(5, "mean_err")?,
            stderr: float(6, "stderr")?.ok_or_else(|| bad("stderr"))?,
            nonconverged: int(7, "nonconverged")?,
            median_err: float(8, "median_err")?,
            selection: rec[9].to_string(),
        });
    }
    Ok(rows)
}

pub fn format_trials_csv(trials: &[TrialRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRIALS_HEADER).map_err(csv_err)?;
    for t in trials {
        w.write_record([
            t.tau.to_string(),
            t.k.to_string(),
            t.trial.to_string(),
            t.seed.to_string(),
            opt_bool(t.success),
            opt(t.regression_error),
            opt(t.penalized_error),
            opt(t.sigma),
            opt(t.sigma_min),
            opt(t.sigma_max),
            t.converged.to_string(),
            t.iterations.to_string(),
            fmt_f64(t.kkt_residual),
            opt_bool(t.certified),
            opt(t.error_bound),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(w)
}

pub fn format_metrics_json(metrics: &[MetricsRow]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(metrics).map_err(|e| Error::input(format!("json: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Writes `summary.csv`, `trials.csv` and `metrics.json` into `dir`, each atomically.
pub fn emit_outputs(output: &ExperimentOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("summary.csv"), format_summary_csv(&output.rows)?.as_bytes())?;
    write_atomic(&dir.join("trials.csv"), format_trials_csv(&output.trials)?.as_bytes())?;
    write_atomic(&dir.join("metrics.json"), format_metrics_json(&output.metrics)?.as_bytes())?;
    Ok(())
}
