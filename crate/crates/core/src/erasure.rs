//! Packet-erasure channel realizations.
//!
//! `X_k^{ij} = 1` means the packet sent by node `j` to node `i` in round `k`
//! was delivered. Symmetric erasures tie both directions of an edge
//! together; asymmetric erasures draw every direction independently. Each
//! indicator is a pure function of `(seed, edge, direction, round, slot)`.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::rng::unit_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErasureMode {
    Symmetric,
    Asymmetric,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ErasureError {
    #[error("erasure probability {0} is outside [0, 1]")]
    BadProbability(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErasureModel {
    pub mode: ErasureMode,
    pub p: f64,
}

impl ErasureModel {
    pub fn new(mode: ErasureMode, p: f64) -> Result<Self, ErasureError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ErasureError::BadProbability(p));
        }
        Ok(Self { mode, p })
    }

    pub fn symmetric(p: f64) -> Result<Self, ErasureError> {
        Self::new(ErasureMode::Symmetric, p)
    }

    pub fn asymmetric(p: f64) -> Result<Self, ErasureError> {
        Self::new(ErasureMode::Asymmetric, p)
    }

    /// Delivery indicator for directed slot `2 * edge + dir` (see
    /// [`RoundErasures`]), without materializing a whole round.
    #[inline]
    pub fn delivered(&self, seed: u64, edge: usize, dir: usize, round: usize, slot: usize) -> bool {
        let stream = match self.mode {
            ErasureMode::Symmetric => edge as u64,
            ErasureMode::Asymmetric => (1u64 << 63) | (2 * edge + dir) as u64,
        };
        unit_f64(seed, &[stream, round as u64, slot as u64]) >= self.p
    }
}

/// Delivery bits of one round (one slot) for every directed edge.
///
/// For undirected edge id `e = (a, b)` with `a < b`, index `2e` holds
/// `X^{ab}` (packet from `b` received at `a`) and `2e + 1` holds `X^{ba}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundErasures {
    bits: Vec<bool>,
}

impl RoundErasures {
    pub fn all_delivered(g: &Graph) -> Self {
        Self {
            bits: vec![true; 2 * g.edge_count()],
        }
    }

    pub fn all_erased(g: &Graph) -> Self {
        Self {
            bits: vec![false; 2 * g.edge_count()],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    fn slot_index(g: &Graph, receiver: usize, sender: usize) -> usize {
        let e = g
            .edge_id(receiver, sender)
            .unwrap_or_else(|| panic!("({receiver}, {sender}) is not an edge"));
        2 * e + usize::from(receiver > sender)
    }

    /// `X^{receiver, sender}`.
    #[inline]
    pub fn delivered(&self, g: &Graph, receiver: usize, sender: usize) -> bool {
        self.bits[Self::slot_index(g, receiver, sender)]
    }

    pub fn set(&mut self, g: &Graph, receiver: usize, sender: usize, delivered: bool) {
        let i = Self::slot_index(g, receiver, sender);
        self.bits[i] = delivered;
    }

    /// Set both directions of an undirected edge.
    pub fn set_edge(&mut self, g: &Graph, a: usize, b: usize, delivered: bool) {
        self.set(g, a, b, delivered);
        self.set(g, b, a, delivered);
    }

    /// True when `X^{ij} = X^{ji}` on every edge.
    pub fn is_symmetric(&self) -> bool {
        self.bits.chunks(2).all(|c| c[0] == c[1])
    }

    /// Whether either direction of edge id `e` was erased.
    pub fn edge_erased(&self, e: usize) -> bool {
        !(self.bits[2 * e] && self.bits[2 * e + 1])
    }
}

/// Sample round `k`, slot `slot`.
pub fn sample_round(model: &ErasureModel, g: &Graph, seed: u64, k: usize, slot: usize) -> RoundErasures {
    let mut bits = Vec::with_capacity(2 * g.edge_count());
    for e in 0..g.edge_count() {
        bits.push(model.delivered(seed, e, 0, k, slot));
        bits.push(model.delivered(seed, e, 1, k, slot));
    }
    RoundErasures { bits }
}

/// `L_k = D_k - A_k` with `A_k = A ∘ X_k`. Row sums are zero in both modes;
/// column sums are zero only for symmetric realizations.
pub fn effective_laplacian(g: &Graph, x: &RoundErasures) -> DMatrix<f64> {
    let n = g.n();
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        for &j in g.neighbors(i) {
            if x.delivered(g, i, j) {
                l[(i, j)] -= 1.0;
                l[(i, i)] += 1.0;
            }
        }
    }
    l
}

/// `I - ε L_k`.
pub fn effective_update(g: &Graph, x: &RoundErasures, eps: f64) -> DMatrix<f64> {
    DMatrix::identity(g.n(), g.n()) - effective_laplacian(g, x) * eps
}

/// Source of per-round, per-slot delivery bits for the protocol simulators.
pub trait ErasureSource {
    fn mode(&self) -> ErasureMode;
    /// Realization for round `round >= 1` and coded-packet slot `slot`.
    fn round(&self, g: &Graph, round: usize, slot: usize) -> RoundErasures;
}

/// The seeded i.i.d. channel.
#[derive(Debug, Clone, Copy)]
pub struct SeededErasures {
    pub model: ErasureModel,
    pub seed: u64,
}

impl SeededErasures {
    pub fn new(model: ErasureModel, seed: u64) -> Self {
        Self { model, seed }
    }
}

impl ErasureSource for SeededErasures {
    fn mode(&self) -> ErasureMode {
        self.model.mode
    }

    fn round(&self, g: &Graph, round: usize, slot: usize) -> RoundErasures {
        sample_round(&self.model, g, self.seed, round, slot)
    }
}

/// Hand-written schedule; rounds beyond the script deliver everything.
#[derive(Debug, Clone)]
pub struct ScriptedErasures {
    mode: ErasureMode,
    /// `rounds[k - 1][slot]`.
    rounds: Vec<Vec<RoundErasures>>,
}

impl ScriptedErasures {
    pub fn new(mode: ErasureMode, rounds: Vec<Vec<RoundErasures>>) -> Self {
        Self { mode, rounds }
    }

    /// Single-slot script where `erased(round, edge_id)` marks an undirected
    /// edge as erased in both directions.
    pub fn symmetric_from_fn(g: &Graph, rounds: usize, erased: impl Fn(usize, usize) -> bool) -> Self {
        let script = (1..=rounds)
            .map(|k| {
                let mut x = RoundErasures::all_delivered(g);
                for (e, &(a, b)) in g.edges().iter().enumerate() {
                    if erased(k, e) {
                        x.set_edge(g, a, b, false);
                    }
                }
                vec![x]
            })
            .collect();
        Self::new(ErasureMode::Symmetric, script)
    }
}

impl ErasureSource for ScriptedErasures {
    fn mode(&self) -> ErasureMode {
        self.mode
    }

    fn round(&self, g: &Graph, round: usize, slot: usize) -> RoundErasures {
        self.rounds
            .get(round.wrapping_sub(1))
            .and_then(|r| r.get(slot))
            .cloned()
            .unwrap_or_else(|| RoundErasures::all_delivered(g))
    }
}

/// Dump `round,i,j,bit` rows (bit = `X^{ij}`) for rounds `1..=rounds`,
/// slot 0.
pub fn write_schedule_csv<W: Write>(
    out: W,
    g: &Graph,
    source: &dyn ErasureSource,
    rounds: usize,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "i", "j", "bit"])?;
    for k in 1..=rounds {
        let x = source.round(g, k, 0);
        for &(a, b) in g.edges() {
            for (i, j) in [(a, b), (b, a)] {
                let bit = u8::from(x.delivered(g, i, j));
                w.write_record(&[k.to_string(), i.to_string(), j.to_string(), bit.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extreme_probabilities() {
        let g = Graph::complete(4).unwrap();
        for mode in [ErasureMode::Symmetric, ErasureMode::Asymmetric] {
            for k in 1..50 {
                let all = sample_round(&ErasureModel::new(mode, 0.0).unwrap(), &g, 3, k, 0);
                assert!(all.bits().iter().all(|&b| b));
                let none = sample_round(&ErasureModel::new(mode, 1.0).unwrap(), &g, 3, k, 0);
                assert!(none.bits().iter().all(|&b| !b));
            }
        }
    }

    #[test]
    fn symmetric_rounds_are_symmetric() {
        let g = Graph::grid(3, 3).unwrap();
        let m = ErasureModel::symmetric(0.5).unwrap();
        for seed in 0..5 {
            for k in 1..100 {
                assert!(sample_round(&m, &g, seed, k, 0).is_symmetric());
            }
        }
    }

    #[test]
    fn effective_laplacian_k2_directed_patterns() {
        // Enumerate the 4 directed patterns of K_2 and check L_k 1 = 0.
        let g = Graph::complete(2).unwrap();
        for x12 in [false, true] {
            for x21 in [false, true] {
                let mut x = RoundErasures::all_delivered(&g);
                x.set(&g, 0, 1, x12);
                x.set(&g, 1, 0, x21);
                let l = effective_laplacian(&g, &x);
                for i in 0..2 {
                    assert_eq!(l.row(i).sum(), 0.0);
                }
                let a = f64::from(u8::from(x12));
                let b = f64::from(u8::from(x21));
                assert_eq!(l, DMatrix::from_row_slice(2, 2, &[a, -a, -b, b]));
            }
        }
        // X^{12} = 1, X^{21} = 0 with nodes (1, 2) = (0, 1) in the
        // 0-based ids: node 1 hears node 2, node 2 hears nothing.
        let mut x = RoundErasures::all_delivered(&g);
        x.set(&g, 1, 0, false);
        assert_eq!(
            effective_laplacian(&g, &x),
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 0.0])
        );
    }

    #[test]
    fn effective_laplacian_extremes() {
        let g = Graph::cycle(5).unwrap();
        assert_eq!(
            effective_laplacian(&g, &RoundErasures::all_delivered(&g)),
            crate::spectral::laplacian(&g)
        );
        assert_eq!(effective_laplacian(&g, &RoundErasures::all_erased(&g)), DMatrix::zeros(5, 5));
    }

    #[test]
    fn csv_dump_is_replayable() {
        let g = Graph::path(3).unwrap();
        let src = SeededErasures::new(ErasureModel::asymmetric(0.4).unwrap(), 17);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_schedule_csv(&mut a, &g, &src, 5).unwrap();
        write_schedule_csv(&mut b, &g, &src, 5).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("round,i,j,bit\n"));
        assert_eq!(text.lines().count(), 1 + 5 * 4);
    }

    #[test]
    fn bad_probability_rejected() {
        assert!(ErasureModel::symmetric(1.5).is_err());
        assert!(ErasureModel::asymmetric(-0.1).is_err());
    }
}
