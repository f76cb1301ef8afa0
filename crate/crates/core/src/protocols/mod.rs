//! Executable consensus protocols over erasure links.
//!
//! * [`uncoded`]: every node applies the update with whatever arrived.
//! * [`repetition`]: retransmit-until-received, for symmetric erasures.
//! * [`treecode`]: anytime tree codes, for asymmetric erasures.
//!
//! The two coded protocols never apply a partial update: they wait until all
//! neighbor iterates of the current index are known, so every iterate they
//! compute equals the one the noiseless recursion would produce.

pub mod repetition;
pub mod trace;
pub mod treecode;
pub mod uncoded;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anytime::CodeError;
use crate::erasure::{ErasureMode, RoundErasures};
use crate::graph::Graph;

pub use repetition::{run_repetition, RepetitionSim};
pub use trace::{QueueSymbol, RoundTrace};
pub use treecode::{run_treecode, TreecodeSim};
pub use uncoded::{run_uncoded, uncoded_error_trajectory, uncoded_step};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("{protocol:?} protocol needs {expected:?} erasures")]
    ModelMismatch { protocol: Protocol, expected: ErasureMode },
    #[error("initial state has {got} entries for {expected} nodes")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error("decoder at node {receiver} reported a block from node {sender} at step {step} that differs from what was sent")]
    Unsound { receiver: usize, sender: usize, step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Uncoded,
    Repetition,
    Treecode,
}

/// What a sender put on a directed link in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symbol {
    /// Iterate `x_src(iter)`.
    Data { iter: usize },
    Wait,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transmission {
    pub src: usize,
    pub dst: usize,
    pub symbol: Symbol,
    /// Packets that reached `dst` (0 or 1 for uncoded and repetition, up to
    /// `n` for tree codes).
    pub delivered: u32,
}

/// Recorded execution of one protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRun {
    pub protocol: Protocol,
    pub graph: Graph,
    pub mode: ErasureMode,
    pub eps: f64,
    pub x0: Vec<f64>,
    /// Horizon `M`.
    pub rounds: usize,
    /// `n_v(t)` for `t = 0..=M`.
    pub n_v: Vec<Vec<usize>>,
    /// `n_{vu}(t)` for `t = 0..=M`, indexed by directed slot (see
    /// [`RoundErasures`]); -1 before anything arrived.
    pub n_vu: Vec<Vec<i64>>,
    /// Transmissions of round `t` at index `t - 1`.
    pub transmissions: Vec<Vec<Transmission>>,
    /// Erasures of round `t` at index `t - 1`, one entry per packet slot.
    pub erasures: Vec<Vec<RoundErasures>>,
    /// Every iterate each node computed, in order.
    pub iterates: Vec<Vec<f64>>,
    /// Latest iterate value per node at the end of each round `t = 0..=M`.
    pub states: Vec<Vec<f64>>,
}

impl ProtocolRun {
    /// `r = (1/N) 1ᵀ x₀`.
    pub fn average(&self) -> f64 {
        self.x0.iter().sum::<f64>() / self.x0.len() as f64
    }

    pub fn min_n_v(&self, t: usize) -> usize {
        self.n_v[t].iter().copied().min().unwrap_or(0)
    }

    /// `n_{vu}(t)` for receiver `v` and sender `u`.
    pub fn n_vu_at(&self, t: usize, v: usize, u: usize) -> i64 {
        self.n_vu[t][slot(&self.graph, v, u)]
    }

    /// Transmission from `src` to `dst` in round `t >= 1`.
    pub fn transmission(&self, t: usize, src: usize, dst: usize) -> &Transmission {
        self.transmissions[t - 1]
            .iter()
            .find(|tx| tx.src == src && tx.dst == dst)
            .expect("no such transmission")
    }

    /// Final `‖x_M − r1‖²` over the latest iterates.
    pub fn final_sq_error(&self) -> f64 {
        let r = self.average();
        self.states[self.rounds].iter().map(|x| (x - r).powi(2)).sum()
    }

    /// Final `max_v |x_v − r|`.
    pub fn final_max_error(&self) -> f64 {
        let r = self.average();
        self.states[self.rounds].iter().fold(0.0, |m, x| f64::max(m, (x - r).abs()))
    }
}

/// Directed slot index of the link `sender -> receiver`.
#[inline]
pub fn slot(g: &Graph, receiver: usize, sender: usize) -> usize {
    let e = g.edge_id(receiver, sender).expect("not an edge");
    2 * e + usize::from(receiver > sender)
}

/// `(receiver, sender)` for a directed slot.
#[inline]
pub fn slot_endpoints(g: &Graph, s: usize) -> (usize, usize) {
    let (a, b) = g.edges()[s / 2];
    if s % 2 == 0 {
        (a, b)
    } else {
        (b, a)
    }
}

/// `x_i - ε Σ_j (x_i - x_j)`, summed in the order given.
#[inline]
pub fn node_update(xi: f64, neighbors: impl IntoIterator<Item = f64>, eps: f64) -> f64 {
    let mut acc = 0.0;
    for xj in neighbors {
        acc += xi - xj;
    }
    xi - eps * acc
}

/// One step of `x ← (I − εL) x`, neighbors summed in ascending id order.
pub fn noiseless_step(x: &[f64], g: &Graph, eps: f64) -> Vec<f64> {
    (0..g.n())
        .map(|i| node_update(x[i], g.neighbors(i).iter().map(|&j| x[j]), eps))
        .collect()
}

/// `x_0, ..., x_k` of the noiseless recursion; `out[k][v] = x_v(k)`.
pub fn noiseless_trajectory(x0: &[f64], g: &Graph, eps: f64, k: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(x0.to_vec());
    for _ in 0..k {
        let next = noiseless_step(out.last().unwrap(), g, eps);
        out.push(next);
    }
    out
}

/// Every recorded iterate must equal the noiseless replay bit for bit.
/// Returns the first `(node, iteration)` that differs.
pub fn check_fidelity(run: &ProtocolRun) -> Result<(), (usize, usize)> {
    let depth = run.iterates.iter().map(Vec::len).max().unwrap_or(1);
    let replay = noiseless_trajectory(&run.x0, &run.graph, run.eps, depth.saturating_sub(1));
    for (v, xs) in run.iterates.iter().enumerate() {
        for (k, &x) in xs.iter().enumerate() {
            if x.to_bits() != replay[k][v].to_bits() {
                return Err((v, k));
            }
        }
    }
    Ok(())
}

pub(crate) fn check_dims(g: &Graph, x0: &[f64]) -> Result<(), ProtocolError> {
    if x0.len() != g.n() {
        return Err(ProtocolError::DimensionMismatch {
            expected: g.n(),
            got: x0.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_examples() {
        let k2 = Graph::complete(2).unwrap();
        assert_eq!(noiseless_step(&[0.0, 1.0], &k2, 0.5), vec![0.5, 0.5]);
        let p3 = Graph::path(3).unwrap();
        assert_eq!(noiseless_step(&[1.0, 0.0, 0.0], &p3, 0.5), vec![0.5, 0.5, 0.0]);
        assert_eq!(noiseless_step(&[2.5; 3], &p3, 0.3), vec![2.5; 3]);
    }

    #[test]
    fn slots_round_trip() {
        let g = Graph::cycle(5).unwrap();
        for s in 0..2 * g.edge_count() {
            let (v, u) = slot_endpoints(&g, s);
            assert_eq!(slot(&g, v, u), s);
        }
    }
}
