//! Tail bounds on the number of rounds the coded protocols need, and the
//! rates they certify. All logarithms are base 2.
//!
//! `P_{M,R'}` is the probability that `M` rounds are not enough for every
//! node to finish `M·R'` iterations.
//!
//! * Repetition, union over witnesses: `N 2^{-M(D(1-R',p) - log(Δ+1))}`.
//! * Repetition, error-free rounds: `N 2^{-M D(R', (1-p)^{|E|})}`.
//! * Tree codes with an anytime exponent `β`:
//!   `N 2^{-M((1-R')β/2 - H(R') - log(Δ+1))}`.

use serde::{Deserialize, Serialize};

use crate::analysis::{gamma_exact, uncoded_sym_rate, AnalysisError};
use crate::anytime::binary_entropy;
use crate::erasure::ErasureModel;
use crate::graph::Graph;
use crate::spectral::{rate_for_eps, spectral_summary, SpectralError};

const BISECTION_TOL: f64 = 1e-13;
/// Relative margin for calling a coding gain strict.
pub const STRICT_GAIN_TOL: f64 = 1e-9;

/// `D(q‖p)` in bits, with `0 log 0 = 0`.
pub fn kl_divergence(q: f64, p: f64) -> f64 {
    let term = |a: f64, b: f64| -> f64 {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).log2()
        }
    };
    (term(q, p) + term(1.0 - q, 1.0 - p)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// Repetition coding, witness union bound.
    WitnessUnion,
    /// Repetition coding, error-free rounds.
    ErrorFreeRounds,
    /// Tree coding with anytime exponent `β`.
    AnytimeCode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: Theorem,
    pub m: usize,
    pub r_prime: f64,
    pub p: Option<f64>,
    pub beta: Option<f64>,
    pub max_degree: usize,
    pub nodes: usize,
    pub edges: usize,
    /// Per-round exponent; the bound decays iff it is positive.
    pub exponent: f64,
    /// `N 2^{-M max(exponent, 0)}`, in `[0, N]`.
    pub raw: f64,
    /// `min(raw, 1)`.
    pub value: f64,
    pub decaying: bool,
    /// Largest rate the bound certifies: `R(p)`, `(1-p)^{|E|}` or `R(β)`.
    pub threshold_rate: f64,
}

fn finish(theorem: Theorem, m: usize, r_prime: f64, g: &Graph, exponent: f64, threshold: f64) -> BoundReport {
    let raw = g.n() as f64 * (-(m as f64) * exponent.max(0.0)).exp2();
    BoundReport {
        theorem,
        m,
        r_prime,
        p: None,
        beta: None,
        max_degree: g.max_degree(),
        nodes: g.n(),
        edges: g.edge_count(),
        exponent,
        raw,
        value: raw.min(1.0),
        decaying: exponent > 0.0,
        threshold_rate: threshold,
    }
}

fn log_deg(g: &Graph) -> f64 {
    (g.max_degree() as f64 + 1.0).log2()
}

/// Chernoff exponent `D(1-R', p)`, zero where the large-deviation event is
/// not rare (`1 - R' <= p`).
fn witness_divergence(r_prime: f64, p: f64) -> f64 {
    let q = 1.0 - r_prime;
    if q <= p {
        0.0
    } else {
        kl_divergence(q, p)
    }
}

pub fn bound_theorem1(m: usize, r_prime: f64, p: f64, g: &Graph) -> BoundReport {
    let exponent = witness_divergence(r_prime, p) - log_deg(g);
    let mut rep = finish(Theorem::WitnessUnion, m, r_prime, g, exponent, rate_r_p(p, g.max_degree()));
    rep.p = Some(p);
    rep
}

pub fn bound_theorem2(m: usize, r_prime: f64, p: f64, g: &Graph) -> BoundReport {
    let s = (1.0 - p).powi(g.edge_count() as i32);
    let exponent = if r_prime < s { kl_divergence(r_prime, s) } else { 0.0 };
    let mut rep = finish(Theorem::ErrorFreeRounds, m, r_prime, g, exponent, s);
    rep.p = Some(p);
    rep
}

pub fn bound_theorem3(m: usize, r_prime: f64, beta: f64, g: &Graph) -> BoundReport {
    let exponent = (1.0 - r_prime) * beta / 2.0 - binary_entropy(r_prime) - log_deg(g);
    let mut rep = finish(Theorem::AnytimeCode, m, r_prime, g, exponent, rate_r_beta(beta, g.max_degree()));
    rep.beta = Some(beta);
    rep
}

/// Root of a function that is positive at `lo` and non-positive at `hi`.
fn bisect(mut lo: f64, mut hi: f64, positive: impl Fn(f64) -> bool) -> f64 {
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if positive(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `R(p) = sup{R' : D(1-R', p) > log(Δ+1)}`; zero iff `p >= 1/(1+Δ)`.
pub fn rate_r_p(p: f64, max_degree: usize) -> f64 {
    let target = (max_degree as f64 + 1.0).log2();
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 / (1.0 + max_degree as f64) {
        return 0.0;
    }
    bisect(0.0, 1.0 - p, |r| witness_divergence(r, p) > target)
}

/// Same threshold with the conservative condition
/// `(1-R') log(1/p) > log(Δ+1) + H(R')`.
pub fn rate_r_p_conservative(p: f64, max_degree: usize) -> f64 {
    let target = (max_degree as f64 + 1.0).log2();
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 / (1.0 + max_degree as f64) {
        return 0.0;
    }
    bisect(0.0, 1.0, |r| (1.0 - r) * (1.0 / p).log2() > target + binary_entropy(r))
}

/// `R(β) = sup{R' : (1-R')β/2 > H(R') + log(Δ+1)}`; zero iff
/// `β <= 2 log(1+Δ)`.
pub fn rate_r_beta(beta: f64, max_degree: usize) -> f64 {
    let target = (max_degree as f64 + 1.0).log2();
    if beta <= 2.0 * target {
        return 0.0;
    }
    // The gap is convex in R', positive at 0 and negative at 1.
    bisect(0.0, 1.0, |r| (1.0 - r) * beta / 2.0 > binary_entropy(r) + target)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodingGainReport {
    pub p: f64,
    pub eps: f64,
    pub mu: f64,
    /// `√λ₂(Γ_s)`, the uncoded mean-square rate.
    pub rate_uncoded: f64,
    pub r_p: f64,
    pub r_p_conservative: f64,
    pub error_free_rate: f64,
    /// `μ^{R(p)}`.
    pub coded_rate_witness: f64,
    /// `μ^{R}` with the conservative `R`.
    pub coded_rate_conservative: f64,
    /// `μ^{(1-p)^{|E|}}`.
    pub coded_rate_error_free: f64,
    /// `min` of the two repetition-coding rates.
    pub coded_rate_best: f64,
    pub gain_witness: bool,
    pub gain_conservative: bool,
    pub gain_error_free: bool,
    /// The witness and conservative conditions reach different verdicts.
    pub forms_disagree: bool,
}

fn strictly_below(a: f64, b: f64) -> bool {
    a < b * (1.0 - STRICT_GAIN_TOL)
}

#[derive(Debug, thiserror::Error)]
pub enum GainError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Does repetition coding beat the uncoded recursion in mean square?
pub fn coding_gain_check(g: &Graph, eps: f64, p: f64) -> Result<CodingGainReport, GainError> {
    let spec = spectral_summary(g, Some(eps))?;
    let mu = rate_for_eps(spec.lambda_fiedler(), spec.lambda_max(), eps);
    let model = ErasureModel::symmetric(p).map_err(|_| AnalysisError::WrongMode {
        expected: crate::erasure::ErasureMode::Symmetric,
    })?;
    let ga = gamma_exact(g, eps, &model)?;
    let rate_uncoded = uncoded_sym_rate(&ga)?;
    let delta = g.max_degree();
    let r_p = rate_r_p(p, delta);
    let r_c = rate_r_p_conservative(p, delta);
    let s = (1.0 - p).powi(g.edge_count() as i32);
    let pow = |r: f64| mu.powf(r);
    let (cw, cc, ce) = (pow(r_p), pow(r_c), pow(s));
    let gain_witness = r_p > 0.0 && strictly_below(cw, rate_uncoded);
    let gain_conservative = r_c > 0.0 && strictly_below(cc, rate_uncoded);
    Ok(CodingGainReport {
        p,
        eps,
        mu,
        rate_uncoded,
        r_p,
        r_p_conservative: r_c,
        error_free_rate: s,
        coded_rate_witness: cw,
        coded_rate_conservative: cc,
        coded_rate_error_free: ce,
        coded_rate_best: cw.min(ce),
        gain_witness,
        gain_conservative,
        gain_error_free: s > 0.0 && strictly_below(ce, rate_uncoded),
        forms_disagree: gain_witness != gain_conservative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divergence_basics() {
        assert_eq!(kl_divergence(0.3, 0.3), 0.0);
        assert!((kl_divergence(1.0, 0.25) - 2.0).abs() < 1e-15);
        assert!(kl_divergence(0.5, 0.0).is_infinite());
    }

    #[test]
    fn thresholds() {
        assert_eq!(rate_r_p(0.0, 2), 1.0);
        assert_eq!(rate_r_p(1.0 / 3.0, 2), 0.0);
        assert!(rate_r_p(0.3, 2) > 0.0);
        assert_eq!(rate_r_beta(2.0 * 3f64.log2(), 2), 0.0);
        assert!(rate_r_beta(1e6, 2) > 0.999);
    }
}
