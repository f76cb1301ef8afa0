//! Exact second-moment analysis of the uncoded recursion.
//!
//! With `e_k = x_k − r1` and random update `W_k = I − εL_k`,
//! `E‖e_k‖² = (e₀⊗e₀)ᵀ Γ^k vec(I)` where `Γ = E[W_kᵀ ⊗ W_kᵀ]` (vec stacks
//! columns). `Γ` is computed exactly by enumerating every erasure pattern
//! with its Bernoulli weight.
//!
//! * Symmetric erasures: `Γ_s` is symmetric and doubly stochastic. The
//!   mean-square rate is `√λ₂`, with `λ₂` the largest eigenvalue magnitude
//!   of `Γ_s` on the deviation subspace `1⊥ ⊗ 1⊥`, where `e₀⊗e₀` lives.
//! * Asymmetric erasures: `1ᵀΓ_a = 1ᵀ` and `Γ_a^k → c̃1ᵀ` with `1ᵀc̃ = 1`,
//!   so the error settles at `N (e₀⊗e₀)ᵀ c̃` instead of vanishing.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::erasure::{ErasureMode, ErasureModel};
use crate::graph::Graph;
use crate::linalg::{gelfand_radius, power_of_two_apply, symmetric_eigenvalues, vec_of};
use crate::rng::hash_counters;

pub const MAX_EDGES_SYMMETRIC: usize = 20;
pub const MAX_EDGES_ASYMMETRIC: usize = 10;
/// Squarings behind the `Γ_a^{4096}` cross-check.
pub const CROSS_CHECK_SQUARINGS: u32 = 12;
pub const CROSS_CHECK_TOL: f64 = 1e-8;
const GELFAND_SQUARINGS: u32 = 30;
const POWER_ITERATIONS: usize = 10_000;
const POWER_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("{edges} edges is too many to enumerate in {mode:?} mode (limit {limit}); use the sampled estimator")]
    TooManyEdges { edges: usize, limit: usize, mode: ErasureMode },
    #[error("operation needs a {expected:?} analysis")]
    WrongMode { expected: ErasureMode },
    #[error("secondary eigenvalue magnitude {0} is too close to 1")]
    NonConvergentPower(f64),
    #[error("fixed-vector limit {fixed} disagrees with the matrix-power limit {power}")]
    CrossCheckFailed { fixed: f64, power: f64 },
    #[error("initial state has {got} entries for {expected} nodes")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaAnalysis {
    pub mode: ErasureMode,
    pub eps: f64,
    pub p: f64,
    pub n: usize,
    /// `N² × N²`.
    pub gamma: DMatrix<f64>,
    /// Symmetric: `λ₂` on the deviation subspace. Asymmetric: spectral
    /// radius of `Γ_a − c̃1ᵀ`.
    pub lambda2_magnitude: f64,
    /// Asymmetric only: `c̃` with `Γ_a c̃ = c̃`, `1ᵀc̃ = 1`.
    pub fixed_vector: Option<DVector<f64>>,
}

/// Serializable digest of a [`GammaAnalysis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub mode: ErasureMode,
    pub eps: f64,
    pub p: f64,
    pub n: usize,
    pub lambda2_magnitude: f64,
    pub rate_uncoded_sym: Option<f64>,
    pub row_sum_deviation: f64,
    pub col_sum_deviation: f64,
    pub fixed_vector: Option<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
}

/// `(row, col, value)` nonzeros of `W = I − εL_k` for one pattern.
fn update_entries(g: &Graph, eps: f64, delivered: impl Fn(usize, usize) -> bool) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(g.n() + 2 * g.edge_count());
    for i in 0..g.n() {
        let mut diag = 1.0;
        for &j in g.neighbors(i) {
            if delivered(i, j) {
                diag -= eps;
                out.push((i, j, eps));
            }
        }
        out.push((i, i, diag));
    }
    out
}

/// Accumulate `w · Wᵀ⊗Wᵀ` into `acc`: entry `(a·N + b, c·N + d)` gets
/// `W[c,a] W[d,b]`.
fn accumulate(acc: &mut DMatrix<f64>, n: usize, entries: &[(usize, usize, f64)], weight: f64) {
    for &(c, a, x) in entries {
        let wx = weight * x;
        for &(d, b, y) in entries {
            acc[(a * n + b, c * n + d)] += wx * y;
        }
    }
}

/// Exact `Γ` by enumeration.
pub fn gamma_matrix(g: &Graph, eps: f64, model: &ErasureModel) -> Result<DMatrix<f64>, AnalysisError> {
    let m = g.edge_count();
    let (bits, limit) = match model.mode {
        ErasureMode::Symmetric => (m, MAX_EDGES_SYMMETRIC),
        ErasureMode::Asymmetric => (2 * m, MAX_EDGES_ASYMMETRIC),
    };
    if m > limit {
        return Err(AnalysisError::TooManyEdges {
            edges: m,
            limit,
            mode: model.mode,
        });
    }
    let n = g.n();
    let patterns: u64 = 1 << bits;
    let chunks = patterns.min(64);
    let per = patterns.div_ceil(chunks);
    let p = model.p;
    let parts: Vec<DMatrix<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = DMatrix::zeros(n * n, n * n);
            for pat in c * per..((c + 1) * per).min(patterns) {
                let ones = pat.count_ones() as i32;
                let weight = (1.0 - p).powi(ones) * p.powi(bits as i32 - ones);
                if weight == 0.0 {
                    continue;
                }
                let delivered = |i: usize, j: usize| {
                    let e = g.edge_id(i, j).unwrap();
                    let bit = match model.mode {
                        ErasureMode::Symmetric => e,
                        ErasureMode::Asymmetric => 2 * e + usize::from(i > j),
                    };
                    (pat >> bit) & 1 == 1
                };
                accumulate(&mut acc, n, &update_entries(g, eps, delivered), weight);
            }
            acc
        })
        .collect();
    // Fixed-order reduction keeps the sum bit-reproducible.
    let mut gamma = DMatrix::zeros(n * n, n * n);
    for part in &parts {
        gamma += part;
    }
    Ok(gamma)
}

/// Sampled `Γ` and the elementwise standard error of the mean.
pub fn gamma_sampled(g: &Graph, eps: f64, model: &ErasureModel, samples: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = g.n();
    let mut sum = DMatrix::zeros(n * n, n * n);
    let mut sum_sq = DMatrix::zeros(n * n, n * n);
    for s in 0..samples {
        let sub = hash_counters(seed, &[s as u64]);
        let entries = update_entries(g, eps, |i, j| {
            let e = g.edge_id(i, j).unwrap();
            model.delivered(sub, e, usize::from(i > j), 1, 0)
        });
        let mut one = DMatrix::zeros(n * n, n * n);
        accumulate(&mut one, n, &entries, 1.0);
        sum_sq += one.component_mul(&one);
        sum += one;
    }
    let k = samples as f64;
    let mean = &sum / k;
    let var = (&sum_sq / k - mean.component_mul(&mean)).map(|v| v.max(0.0));
    let se = var.map(|v| (v / k).sqrt());
    (mean, se)
}

/// Projector onto `1⊥ ⊗ 1⊥`.
fn deviation_projector(n: usize) -> DMatrix<f64> {
    let c = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    c.kronecker(&c)
}

pub fn gamma_exact(g: &Graph, eps: f64, model: &ErasureModel) -> Result<GammaAnalysis, AnalysisError> {
    let gamma = gamma_matrix(g, eps, model)?;
    let n = g.n();
    let (lambda2, fixed) = match model.mode {
        ErasureMode::Symmetric => {
            let proj = deviation_projector(n);
            let restricted = &proj * &gamma * &proj;
            let eig = symmetric_eigenvalues(&restricted);
            let lam = eig.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            (lam, None)
        }
        ErasureMode::Asymmetric => {
            let c = fixed_vector(&gamma);
            let ones = DMatrix::from_element(1, n * n, 1.0);
            let deflated = &gamma - &c * ones;
            let sec = gelfand_radius(&deflated, GELFAND_SQUARINGS);
            if sec >= 1.0 - 1e-9 {
                return Err(AnalysisError::NonConvergentPower(sec));
            }
            (sec, Some(c))
        }
    };
    Ok(GammaAnalysis {
        mode: model.mode,
        eps,
        p: model.p,
        n,
        gamma,
        lambda2_magnitude: lambda2,
        fixed_vector: fixed,
    })
}

/// Right fixed vector of a column-stochastic-in-sum matrix, normalized so
/// the entries sum to one.
fn fixed_vector(gamma: &DMatrix<f64>) -> DVector<f64> {
    let dim = gamma.nrows();
    let mut c = DVector::from_element(dim, 1.0 / dim as f64);
    for _ in 0..POWER_ITERATIONS {
        let mut next = gamma * &c;
        let s = next.sum();
        next /= s;
        let diff = (&next - &c).amax();
        c = next;
        if diff < POWER_TOL {
            break;
        }
    }
    c
}

impl GammaAnalysis {
    pub fn report(&self) -> GammaReport {
        let dim = self.gamma.nrows();
        let mut row_dev = 0.0f64;
        let mut col_dev = 0.0f64;
        for i in 0..dim {
            row_dev = row_dev.max((self.gamma.row(i).sum() - 1.0).abs());
            col_dev = col_dev.max((self.gamma.column(i).sum() - 1.0).abs());
        }
        GammaReport {
            mode: self.mode,
            eps: self.eps,
            p: self.p,
            n: self.n,
            lambda2_magnitude: self.lambda2_magnitude,
            rate_uncoded_sym: uncoded_sym_rate(self).ok(),
            row_sum_deviation: row_dev,
            col_sum_deviation: col_dev,
            fixed_vector: self.fixed_vector.as_ref().map(|c| c.iter().copied().collect()),
            gamma: (0..dim).map(|i| self.gamma.row(i).iter().copied().collect()).collect(),
        }
    }

    /// `(e₀⊗e₀)ᵀ Γ^k vec(I)` for `k = 0..=k_max`.
    pub fn mse_trajectory(&self, x0: &[f64], k_max: usize) -> Result<Vec<f64>, AnalysisError> {
        let dd = deviation_kron(x0, self.n)?;
        let mut v = vec_of(&DMatrix::identity(self.n, self.n));
        let mut out = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            if k > 0 {
                v = &self.gamma * v;
            }
            out.push(dd.dot(&v));
        }
        Ok(out)
    }
}

fn deviation_kron(x0: &[f64], n: usize) -> Result<DVector<f64>, AnalysisError> {
    if x0.len() != n {
        return Err(AnalysisError::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    let r = x0.iter().sum::<f64>() / n as f64;
    let d = DVector::from_iterator(n, x0.iter().map(|x| x - r));
    Ok(d.kronecker(&d))
}

/// `√λ₂(Γ_s)`: mean-square convergence factor of the uncoded recursion.
pub fn uncoded_sym_rate(ga: &GammaAnalysis) -> Result<f64, AnalysisError> {
    if ga.mode != ErasureMode::Symmetric {
        return Err(AnalysisError::WrongMode {
            expected: ErasureMode::Symmetric,
        });
    }
    Ok(ga.lambda2_magnitude.sqrt())
}

/// `lim E‖x_k − r1‖² = N (e₀⊗e₀)ᵀ c̃`, checked against `Γ_a^{4096} vec(I)`.
pub fn asym_limit_mse(ga: &GammaAnalysis, x0: &[f64]) -> Result<f64, AnalysisError> {
    let Some(c) = &ga.fixed_vector else {
        return Err(AnalysisError::WrongMode {
            expected: ErasureMode::Asymmetric,
        });
    };
    let dd = deviation_kron(x0, ga.n)?;
    let fixed = dd.dot(c) * ga.n as f64;
    let vec_i = vec_of(&DMatrix::identity(ga.n, ga.n));
    let power = dd.dot(&power_of_two_apply(&ga.gamma, CROSS_CHECK_SQUARINGS, &vec_i));
    if (fixed - power).abs() > CROSS_CHECK_TOL * fixed.abs().max(1.0) {
        return Err(AnalysisError::CrossCheckFailed { fixed, power });
    }
    Ok(fixed)
}
