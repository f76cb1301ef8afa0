//! Laplacians, eigenvalues and the rate of the fixed-weight recursion
//! `x_{k+1} = (I - εL) x_k`.
//!
//! For `W = I - εL` the recursion reaches average consensus iff
//! `0 < ε < 2/λ_1(L)`, and its rate is
//! `μ = max{1 - ε λ_{N-1}(L), ε λ_1(L) - 1}`, minimized at
//! `ε* = 2 / (λ_1 + λ_{N-1})`. The looser sufficient condition `ε < 1/Δ`
//! also works but is not enforced here.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::linalg::symmetric_eigenvalues;

/// λ_{N-1} below this is treated as zero.
pub const CONNECTIVITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("graph is disconnected (λ_{{N-1}} = {0:e})")]
    DisconnectedGraph(f64),
    #[error("ε = {eps} is outside (0, 2/λ_1) = (0, {limit})")]
    InvalidEps { eps: f64, limit: f64 },
    #[error("single-node graph has no consensus rate")]
    TrivialGraph,
    #[error("internal consistency: BFS says connected={bfs} but λ_{{N-1}} = {lambda:e}")]
    Inconsistent { bfs: bool, lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    /// Laplacian eigenvalues ascending: `λ_N = 0 ≤ λ_{N-1} ≤ ... ≤ λ_1`.
    pub eigenvalues: Vec<f64>,
    pub eps_star: f64,
    /// ε the rate was evaluated at (ε* when none was given).
    pub eps: f64,
    pub mu: f64,
}

impl SpectralSummary {
    /// Largest Laplacian eigenvalue λ_1.
    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    /// Algebraic connectivity λ_{N-1}.
    pub fn lambda_fiedler(&self) -> f64 {
        self.eigenvalues[1]
    }
}

/// `L = D - A`.
pub fn laplacian(g: &Graph) -> DMatrix<f64> {
    let n = g.n();
    let mut l = DMatrix::zeros(n, n);
    for &(a, b) in g.edges() {
        l[(a, b)] = -1.0;
        l[(b, a)] = -1.0;
        l[(a, a)] += 1.0;
        l[(b, b)] += 1.0;
    }
    l
}

pub fn laplacian_eigenvalues(g: &Graph) -> Vec<f64> {
    let mut eig = symmetric_eigenvalues(&laplacian(g));
    // L is positive semidefinite; clamp rounding noise on the zero mode.
    for e in &mut eig {
        if e.abs() < 1e-13 {
            *e = 0.0;
        }
    }
    eig
}

/// Noiseless rate `max(1 − ελ_{N-1}, ελ_1 − 1)` for a given ε.
pub fn rate_for_eps(lambda_fiedler: f64, lambda_max: f64, eps: f64) -> f64 {
    (1.0 - eps * lambda_fiedler).max(eps * lambda_max - 1.0).max(0.0)
}

pub fn spectral_summary(g: &Graph, eps: Option<f64>) -> Result<SpectralSummary, SpectralError> {
    if g.n() < 2 {
        return Err(SpectralError::TrivialGraph);
    }
    let eigenvalues = laplacian_eigenvalues(g);
    let fiedler = eigenvalues[1];
    let lmax = *eigenvalues.last().unwrap();
    let bfs = g.is_connected();
    let spectral_connected = fiedler >= CONNECTIVITY_TOL;
    if bfs != spectral_connected {
        return Err(SpectralError::Inconsistent { bfs, lambda: fiedler });
    }
    if !bfs {
        return Err(SpectralError::DisconnectedGraph(fiedler));
    }
    let eps_star = 2.0 / (lmax + fiedler);
    let eps = eps.unwrap_or(eps_star);
    check_eps(eps, lmax)?;
    Ok(SpectralSummary {
        mu: rate_for_eps(fiedler, lmax, eps),
        eigenvalues,
        eps_star,
        eps,
    })
}

fn check_eps(eps: f64, lambda_max: f64) -> Result<(), SpectralError> {
    let limit = if lambda_max > 0.0 { 2.0 / lambda_max } else { f64::INFINITY };
    // The boundary 2/λ_1 itself is excluded even when λ_1 carries rounding.
    if !(eps >= 0.0 && eps < limit * (1.0 - 1e-12)) {
        return Err(SpectralError::InvalidEps { eps, limit });
    }
    Ok(())
}

/// `W = I - εL`, doubly stochastic for any ε.
pub fn consensus_matrix(g: &Graph, eps: f64) -> Result<DMatrix<f64>, SpectralError> {
    let lmax = laplacian_eigenvalues(g).last().copied().unwrap_or(0.0);
    check_eps(eps, lmax)?;
    Ok(DMatrix::identity(g.n(), g.n()) - laplacian(g) * eps)
}
