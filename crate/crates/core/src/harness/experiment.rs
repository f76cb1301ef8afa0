//! Monte Carlo execution, rate fits and tail probabilities.
//!
//! Trials are processed in fixed chunks of [`CHUNK`] trials; chunks run on
//! the rayon pool and are merged in chunk order, so every aggregate is the
//! same whatever the thread count or scheduling.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};
use thiserror::Error;

use crate::analysis::{asym_limit_mse, gamma_exact, uncoded_sym_rate, MAX_EDGES_ASYMMETRIC, MAX_EDGES_SYMMETRIC};
use crate::anytime::least_squares;
use crate::bounds::{bound_theorem1, bound_theorem2, rate_r_p};
use crate::erasure::{ErasureMode, ErasureSource, RoundErasures, SeededErasures};
use crate::protocols::repetition::{run_repetition, RepetitionSim};
use crate::protocols::treecode::{run_treecode, TreecodeSim};
use crate::protocols::uncoded::{run_uncoded, uncoded_step};
use crate::protocols::{Protocol, ProtocolError, ProtocolRun};
use crate::rng::trial_seed;

use super::config::{ConfigError, ExperimentConfig, Prepared};
use super::report::{ExperimentReport, GraphInfo};

/// Trials per work unit.
pub const CHUNK: usize = 64;
/// Batches used for the batch-means confidence interval of the fitted rate.
pub const CI_BATCHES: usize = 20;
/// Rounds whose error is below this multiple of `‖x₀‖` are excluded from fits.
pub const NOISE_FLOOR: f64 = 1e3 * f64::EPSILON;
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
/// Fewest trials for a tail-probability estimate.
pub const MIN_TAIL_TRIALS: usize = 100;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("tail estimates need at least {MIN_TAIL_TRIALS} trials, got {0}")]
    TooFewTrials(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Per-round record of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    /// `min_v n_v(t)` for `t = 0..=M`.
    pub min_n_v: Vec<usize>,
    /// `‖x(t) − r1‖²` of the latest iterates, `t = 0..=M`.
    pub err_sq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub final_min_n_v: usize,
    pub final_err_norm: f64,
    /// Per-round log convergence factor of this trial, if fittable.
    pub log_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Mean-square factor per round: `exp(slope/2)` of `ln E‖x_k − r1‖²`.
    pub mu_hat: Option<f64>,
    pub mu_ci_half: Option<f64>,
    /// `exp` of the trial-averaged slope of `ln ‖x_k − r1‖`.
    pub mu_typical: Option<f64>,
    pub mu_typical_ci_half: Option<f64>,
    /// Rounds `[lo, hi]` the fits may use (tail half).
    pub fit_window: (usize, usize),
    /// Rounds inside the window that cleared the noise floor.
    pub fit_points: usize,
    /// `E[min_v n_v(M)] / M`.
    pub r_prime_hat: f64,
    pub r_prime_ci_half: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub m: usize,
    pub r_prime: f64,
    pub trials: usize,
    /// Trials with `min_v n_v(M) < M R'`.
    pub failures: usize,
    pub p_hat: f64,
    /// Binomial standard error `√(p̂(1−p̂)/n)`.
    pub sigma: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Clopper–Pearson interval at confidence `1 − alpha`.
pub fn clopper_pearson(failures: usize, trials: usize, alpha: f64) -> (f64, f64) {
    let (k, n) = (failures as f64, trials as f64);
    let lo = if failures == 0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0).unwrap().inverse_cdf(alpha / 2.0)
    };
    let hi = if failures == trials {
        1.0
    } else {
        Beta::new(k + 1.0, n - k).unwrap().inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// Tail estimate from the per-trial `min_v n_v(M)`.
pub fn tail_from_counts(final_min_n_v: &[usize], m: usize, r_prime: f64) -> TailEstimate {
    let need = m as f64 * r_prime;
    let failures = final_min_n_v.iter().filter(|&&n| (n as f64) < need).count();
    let trials = final_min_n_v.len();
    let p_hat = if trials == 0 { 0.0 } else { failures as f64 / trials as f64 };
    let (ci_lo, ci_hi) = if trials == 0 { (0.0, 1.0) } else { clopper_pearson(failures, trials, 0.05) };
    TailEstimate {
        m,
        r_prime,
        trials,
        failures,
        p_hat,
        sigma: if trials == 0 { 0.0 } else { (p_hat * (1.0 - p_hat) / trials as f64).sqrt() },
        ci_lo,
        ci_hi,
    }
}

fn err_sq(x: impl Iterator<Item = f64>, r: f64) -> f64 {
    x.map(|v| (v - r) * (v - r)).sum()
}

fn source(prep: &Prepared, trial: usize) -> SeededErasures {
    SeededErasures::new(prep.config.model, trial_seed(prep.config.seed, trial as u64))
}

/// Run one trial without recording transmissions.
pub fn run_trial(prep: &Prepared, trial: usize) -> Result<TrialOutcome, HarnessError> {
    let g = &prep.graph;
    let m = prep.config.rounds;
    let src = source(prep, trial);
    let r = prep.x0.iter().sum::<f64>() / g.n() as f64;
    let mut min_n_v = Vec::with_capacity(m + 1);
    let mut errs = Vec::with_capacity(m + 1);
    min_n_v.push(0);
    errs.push(err_sq(prep.x0.iter().copied(), r));
    match prep.config.protocol {
        Protocol::Uncoded => {
            let mut x = prep.x0.clone();
            for t in 1..=m {
                x = uncoded_step(&x, &src.round(g, t, 0), g, prep.eps);
                min_n_v.push(t);
                errs.push(err_sq(x.iter().copied(), r));
            }
        }
        Protocol::Repetition => {
            if src.mode() != ErasureMode::Symmetric {
                return Err(ProtocolError::ModelMismatch {
                    protocol: Protocol::Repetition,
                    expected: ErasureMode::Symmetric,
                }
                .into());
            }
            let mut sim = RepetitionSim::new(g, prep.eps, &prep.x0)?;
            for t in 1..=m {
                sim.step(&src.round(g, t, 0));
                min_n_v.push(sim.min_n_v());
                errs.push(err_sq(sim.iterates().iter().map(|it| *it.last().unwrap()), r));
            }
        }
        Protocol::Treecode => {
            let code = prep.code.clone().expect("validated tree-code config has a code");
            let n = code.params().n;
            let mut sim = TreecodeSim::new(g, prep.eps, &prep.x0, code)?;
            for t in 1..=m {
                let slots: Vec<RoundErasures> = (0..n).map(|j| src.round(g, t, j)).collect();
                sim.step(&slots)?;
                min_n_v.push(sim.min_n_v());
                errs.push(err_sq(sim.iterates().iter().map(|it| *it.last().unwrap()), r));
            }
        }
    }
    Ok(TrialOutcome {
        trial,
        min_n_v,
        err_sq: errs,
    })
}

/// Full recorded run of `trial`, for trace dumps and oracles.
pub fn record_trial(prep: &Prepared, trial: usize) -> Result<ProtocolRun, HarnessError> {
    let g = &prep.graph;
    let src = source(prep, trial);
    let m = prep.config.rounds;
    Ok(match prep.config.protocol {
        Protocol::Uncoded => run_uncoded(g, prep.eps, &src, &prep.x0, m)?,
        Protocol::Repetition => run_repetition(g, prep.eps, &src, &prep.x0, m)?,
        Protocol::Treecode => run_treecode(g, prep.eps, &src, &prep.x0, m, prep.code.clone().unwrap())?,
    })
}

fn fit_window(m: usize) -> (usize, usize) {
    (m.div_ceil(2), m)
}

fn floor_sq(prep: &Prepared) -> f64 {
    let norm = prep.x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    (NOISE_FLOOR * norm).powi(2)
}

/// Slope of `ln y_k` over the window points with `y_k > floor`.
fn log_slope(y: &[f64], window: (usize, usize), floor: f64) -> Option<(f64, usize)> {
    let pts: Vec<(f64, f64)> = (window.0..=window.1)
        .filter(|&k| y[k] > floor)
        .map(|k| (k as f64, y[k].ln()))
        .collect();
    (pts.len() >= 2).then(|| (least_squares(&pts).0, pts.len()))
}

#[derive(Debug, Clone)]
struct Chunk {
    sum_sq: Vec<f64>,
    sum_sq2: Vec<f64>,
    trials: usize,
    summaries: Vec<TrialSummary>,
    kept: Vec<TrialOutcome>,
}

fn run_chunk(prep: &Prepared, range: std::ops::Range<usize>, keep: usize) -> Result<Chunk, HarnessError> {
    let m = prep.config.rounds;
    let window = fit_window(m);
    let floor = floor_sq(prep);
    let mut c = Chunk {
        sum_sq: vec![0.0; m + 1],
        sum_sq2: vec![0.0; m + 1],
        trials: 0,
        summaries: Vec::with_capacity(range.len()),
        kept: Vec::new(),
    };
    for trial in range {
        let out = run_trial(prep, trial)?;
        for (k, &e) in out.err_sq.iter().enumerate() {
            c.sum_sq[k] += e;
            c.sum_sq2[k] += e * e;
        }
        c.trials += 1;
        c.summaries.push(TrialSummary {
            trial,
            seed: trial_seed(prep.config.seed, trial as u64),
            final_min_n_v: out.min_n_v[m],
            final_err_norm: out.err_sq[m].sqrt(),
            log_rate: log_slope(&out.err_sq, window, floor).map(|(s, _)| s / 2.0),
        });
        if trial < keep {
            c.kept.push(out);
        }
    }
    Ok(c)
}

/// Experiment result: the deterministic report plus in-memory artifacts.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: ExperimentReport,
    /// Per-round rows of the leading trials (for `runs.csv`).
    pub outcomes: Vec<TrialOutcome>,
    /// Recorded run of trial 0 when a trace was requested.
    pub trace: Option<ProtocolRun>,
    pub wall_seconds: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn rate_estimate(prep: &Prepared, chunks: &[Chunk], mse: &[f64], summaries: &[TrialSummary]) -> RateEstimate {
    let m = prep.config.rounds;
    let window = fit_window(m);
    let floor = floor_sq(prep);
    let fit = log_slope(mse, window, floor);
    let mu_hat = fit.map(|(s, _)| (s / 2.0).exp());

    let batches = CI_BATCHES.min(chunks.len());
    let mu_ci_half = if batches >= 2 && mu_hat.is_some() {
        let mut sums = vec![(vec![0.0; m + 1], 0usize); batches];
        for (i, c) in chunks.iter().enumerate() {
            let b = i * batches / chunks.len();
            for (acc, s) in sums[b].0.iter_mut().zip(&c.sum_sq) {
                *acc += s;
            }
            sums[b].1 += c.trials;
        }
        let est: Option<Vec<f64>> = sums
            .iter()
            .map(|(s, n)| {
                let y: Vec<f64> = s.iter().map(|v| v / *n as f64).collect();
                log_slope(&y, window, floor).map(|(sl, _)| (sl / 2.0).exp())
            })
            .collect();
        est.map(|e| Z95 * mean_sd(&e).1 / (batches as f64).sqrt())
    } else {
        None
    };

    let slopes: Vec<f64> = summaries.iter().filter_map(|s| s.log_rate).collect();
    let (mu_typical, mu_typical_ci_half) = if slopes.is_empty() {
        (None, None)
    } else {
        let (mean, sd) = mean_sd(&slopes);
        let mu = mean.exp();
        (Some(mu), Some(mu * Z95 * sd / (slopes.len() as f64).sqrt()))
    };

    let rates: Vec<f64> = summaries.iter().map(|s| s.final_min_n_v as f64 / m as f64).collect();
    let (r_mean, r_sd) = mean_sd(&rates);
    RateEstimate {
        mu_hat,
        mu_ci_half,
        mu_typical,
        mu_typical_ci_half,
        fit_window: window,
        fit_points: fit.map_or(0, |(_, n)| n),
        r_prime_hat: r_mean,
        r_prime_ci_half: Z95 * r_sd / (rates.len() as f64).sqrt(),
    }
}

/// Predicted-versus-empirical row of `rates.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub quantity: String,
    pub predicted: Option<f64>,
    pub empirical: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

impl RateRow {
    fn new(quantity: impl Into<String>, predicted: Option<f64>, empirical: f64, half: Option<f64>) -> Self {
        Self {
            quantity: quantity.into(),
            predicted,
            empirical,
            ci_lo: half.map(|h| empirical - h),
            ci_hi: half.map(|h| empirical + h),
        }
    }
}

fn rate_rows(prep: &Prepared, rate: &RateEstimate, mse: &[f64], mse_se: &[f64], tails: &[TailEstimate]) -> Vec<RateRow> {
    let cfg = &prep.config;
    let g = &prep.graph;
    let p = cfg.model.p;
    let mode = cfg.model.mode;
    let mut rows = Vec::new();

    let mu_prediction = match cfg.protocol {
        _ if p == 0.0 => Some(prep.spectral.mu),
        Protocol::Uncoded if mode == ErasureMode::Symmetric && g.edge_count() <= MAX_EDGES_SYMMETRIC => {
            gamma_exact(g, prep.eps, &cfg.model)
                .and_then(|ga| uncoded_sym_rate(&ga))
                .map_err(|e| log::debug!("no mean-square prediction: {e}"))
                .ok()
        }
        _ => None,
    };
    if let Some(mu) = rate.mu_hat {
        rows.push(RateRow::new("mu_ms", mu_prediction, mu, rate.mu_ci_half));
    }
    if let Some(mu) = rate.mu_typical {
        let predicted = (p == 0.0).then_some(prep.spectral.mu);
        rows.push(RateRow::new("mu_typical", predicted, mu, rate.mu_typical_ci_half));
    }

    let r_prediction = match cfg.protocol {
        Protocol::Uncoded => Some(1.0),
        _ if p == 0.0 => Some(1.0),
        _ if p == 1.0 => Some(0.0),
        _ => None,
    };
    rows.push(RateRow::new("r_prime", r_prediction, rate.r_prime_hat, Some(rate.r_prime_ci_half)));
    if cfg.protocol == Protocol::Repetition {
        let certified = rate_r_p(p, g.max_degree()).max((1.0 - p).powi(g.edge_count() as i32));
        rows.push(RateRow::new(
            "r_prime_certified",
            Some(certified),
            rate.r_prime_hat,
            Some(rate.r_prime_ci_half),
        ));
    }

    if cfg.protocol == Protocol::Uncoded && mode == ErasureMode::Asymmetric && g.edge_count() <= MAX_EDGES_ASYMMETRIC {
        let predicted = gamma_exact(g, prep.eps, &cfg.model)
            .and_then(|ga| asym_limit_mse(&ga, &prep.x0))
            .map_err(|e| log::debug!("no limit prediction: {e}"))
            .ok();
        let m = cfg.rounds;
        rows.push(RateRow::new("limit_mse", predicted, mse[m], Some(Z95 * mse_se[m])));
    }

    for t in tails {
        let predicted = match cfg.protocol {
            Protocol::Uncoded => Some(0.0),
            Protocol::Repetition => {
                Some(bound_theorem1(t.m, t.r_prime, p, g).value.min(bound_theorem2(t.m, t.r_prime, p, g).value))
            }
            Protocol::Treecode => None,
        };
        rows.push(RateRow {
            quantity: format!("tail_p[r={}]", t.r_prime),
            predicted,
            empirical: t.p_hat,
            ci_lo: Some(t.ci_lo),
            ci_hi: Some(t.ci_hi),
        });
    }
    rows
}

/// Execute all trials of a validated configuration.
pub fn run_prepared(prep: &Prepared) -> Result<Experiment, HarnessError> {
    let start = Instant::now();
    let cfg = &prep.config;
    let m = cfg.rounds;
    let keep = cfg.output.runs_trials.unwrap_or(cfg.trials).min(cfg.trials);
    let n_chunks = cfg.trials.div_ceil(CHUNK);
    let chunks: Vec<Chunk> = (0..n_chunks)
        .into_par_iter()
        .map(|c| run_chunk(prep, c * CHUNK..((c + 1) * CHUNK).min(cfg.trials), keep))
        .collect::<Result<_, _>>()?;

    let t = cfg.trials as f64;
    let mut mse = vec![0.0; m + 1];
    let mut second = vec![0.0; m + 1];
    for c in &chunks {
        for k in 0..=m {
            mse[k] += c.sum_sq[k];
            second[k] += c.sum_sq2[k];
        }
    }
    let mse_se: Vec<f64> = (0..=m)
        .map(|k| {
            mse[k] /= t;
            if cfg.trials < 2 {
                return 0.0;
            }
            let var = ((second[k] / t - mse[k] * mse[k]) * t / (t - 1.0)).max(0.0);
            (var / t).sqrt()
        })
        .collect();

    let summaries: Vec<TrialSummary> = chunks.iter().flat_map(|c| c.summaries.iter().cloned()).collect();
    let rate = rate_estimate(prep, &chunks, &mse, &summaries);
    let finals: Vec<usize> = summaries.iter().map(|s| s.final_min_n_v).collect();
    let tails: Vec<TailEstimate> = cfg.tail_rates.iter().map(|&r| tail_from_counts(&finals, m, r)).collect();
    let rates = rate_rows(prep, &rate, &mse, &mse_se, &tails);
    let trace = if cfg.output.trace { Some(record_trial(prep, 0)?) } else { None };
    let outcomes = chunks.into_iter().flat_map(|c| c.kept).collect();

    let report = ExperimentReport {
        config_hash: prep.config_hash.clone(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        graph: GraphInfo::of(&prep.graph),
        eps: prep.eps,
        eps_star: prep.spectral.eps_star,
        mu: prep.spectral.mu,
        rate,
        rates,
        tails,
        mse,
        mse_se,
        trials: summaries,
    };
    Ok(Experiment {
        report,
        outcomes,
        trace,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment, HarnessError> {
    run_prepared(&cfg.prepare()?)
}

/// `P̂_{M,R'}`: fraction of `cfg.trials` runs of `m` rounds with
/// `min_v n_v(M) < M R'`, with a Clopper–Pearson 95% interval.
pub fn estimate_tail_probability(cfg: &ExperimentConfig, m: usize, r_prime: f64) -> Result<TailEstimate, HarnessError> {
    if cfg.trials < MIN_TAIL_TRIALS {
        return Err(HarnessError::TooFewTrials(cfg.trials));
    }
    let mut cfg = cfg.clone();
    cfg.rounds = m;
    cfg.tail_rates.clear();
    cfg.output.runs_trials = Some(0);
    cfg.output.trace = false;
    let prep = cfg.prepare()?;
    let finals: Vec<usize> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| run_trial(&prep, trial).map(|o| o.min_n_v[m]))
        .collect::<Result<_, _>>()?;
    Ok(tail_from_counts(&finals, m, r_prime))
}
