//! Retransmit-until-received consensus for symmetric erasures.
//!
//! With symmetric erasures an erased incoming packet tells the sender that
//! its own packet on the same link was lost too, so each link behaves like
//! an erasure channel with feedback. Node `u` keeps sending the next iterate
//! `v` is missing, `x_u(n_vu + 1)`, until it gets through, and sends a wait
//! when `v` already has everything `u` has computed:
//!
//! * in round `t + 1`, `u` sends data iff `n_u(t) > n_vu(t)`;
//! * `n_vu(t + 1) = n_vu(t) + X_{t+1}^{vu} · 1{n_u(t) > n_vu(t)}`;
//! * `n_v(t) = 1 + min_u n_vu(t)`.
//!
//! Retransmitting an erased data packet and skipping an erased wait both
//! fall out of the first rule.

use crate::erasure::{ErasureMode, ErasureSource, RoundErasures};
use crate::graph::Graph;

use super::{check_dims, node_update, slot_endpoints, Protocol, ProtocolError, ProtocolRun, Symbol, Transmission};

/// Incremental state of the repetition protocol.
#[derive(Debug, Clone)]
pub struct RepetitionSim<'g> {
    g: &'g Graph,
    eps: f64,
    /// `n_vu` per directed slot.
    received: Vec<i64>,
    iterates: Vec<Vec<f64>>,
    t: usize,
}

impl<'g> RepetitionSim<'g> {
    pub fn new(g: &'g Graph, eps: f64, x0: &[f64]) -> Result<Self, ProtocolError> {
        check_dims(g, x0)?;
        Ok(Self {
            g,
            eps,
            received: vec![-1; 2 * g.edge_count()],
            iterates: x0.iter().map(|&v| vec![v]).collect(),
            t: 0,
        })
    }

    pub fn round(&self) -> usize {
        self.t
    }

    /// `n_v` after the last completed round.
    pub fn n_v(&self, v: usize) -> usize {
        self.iterates[v].len() - 1
    }

    pub fn min_n_v(&self) -> usize {
        (0..self.g.n()).map(|v| self.n_v(v)).min().unwrap_or(0)
    }

    pub fn counters(&self) -> &[i64] {
        &self.received
    }

    pub fn iterates(&self) -> &[Vec<f64>] {
        &self.iterates
    }

    /// Play one round; returns what crossed every directed link.
    pub fn step(&mut self, x: &RoundErasures) -> Vec<Transmission> {
        let g = self.g;
        self.t += 1;
        let mut txs = Vec::with_capacity(self.received.len());
        for s in 0..self.received.len() {
            let (v, u) = slot_endpoints(g, s);
            let have = self.received[s];
            let symbol = if self.n_v(u) as i64 > have {
                Symbol::Data { iter: (have + 1) as usize }
            } else {
                Symbol::Wait
            };
            let delivered = x.bits()[s];
            if delivered && matches!(symbol, Symbol::Data { .. }) {
                self.received[s] += 1;
            }
            txs.push(Transmission {
                src: u,
                dst: v,
                symbol,
                delivered: u32::from(delivered),
            });
        }
        for v in 0..g.n() {
            let k = self.n_v(v);
            let ready = g
                .neighbors(v)
                .iter()
                .all(|&u| self.received[super::slot(g, v, u)] >= k as i64);
            if ready {
                let xi = self.iterates[v][k];
                let next = node_update(xi, g.neighbors(v).iter().map(|&u| self.iterates[u][k]), self.eps);
                self.iterates[v].push(next);
            }
        }
        txs
    }
}

pub fn run_repetition(
    g: &Graph,
    eps: f64,
    source: &dyn ErasureSource,
    x0: &[f64],
    rounds: usize,
) -> Result<ProtocolRun, ProtocolError> {
    if source.mode() != ErasureMode::Symmetric {
        return Err(ProtocolError::ModelMismatch {
            protocol: Protocol::Repetition,
            expected: ErasureMode::Symmetric,
        });
    }
    let mut sim = RepetitionSim::new(g, eps, x0)?;
    let snapshot = |sim: &RepetitionSim| -> (Vec<usize>, Vec<f64>) {
        (0..g.n())
            .map(|v| (sim.n_v(v), *sim.iterates[v].last().unwrap()))
            .unzip()
    };
    let (n0, s0) = snapshot(&sim);
    let mut n_v = vec![n0];
    let mut states = vec![s0];
    let mut n_vu = vec![sim.received.clone()];
    let mut transmissions = Vec::with_capacity(rounds);
    let mut erasures = Vec::with_capacity(rounds);
    for t in 1..=rounds {
        let x = source.round(g, t, 0);
        transmissions.push(sim.step(&x));
        erasures.push(vec![x]);
        let (nv, st) = snapshot(&sim);
        n_v.push(nv);
        states.push(st);
        n_vu.push(sim.received.clone());
    }
    Ok(ProtocolRun {
        protocol: Protocol::Repetition,
        graph: g.clone(),
        mode: ErasureMode::Symmetric,
        eps,
        x0: x0.to_vec(),
        rounds,
        n_v,
        n_vu,
        transmissions,
        erasures,
        iterates: sim.iterates,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erasure::{ErasureModel, ScriptedErasures, SeededErasures};
    use crate::protocols::check_fidelity;

    #[test]
    fn no_erasures_one_iteration_per_round() {
        let g = Graph::cycle(5).unwrap();
        let src = ScriptedErasures::new(ErasureMode::Symmetric, vec![]);
        let run = run_repetition(&g, 0.3, &src, &[5.0, 0.0, 0.0, 0.0, 0.0], 12).unwrap();
        for t in 0..=12 {
            assert!(run.n_v[t].iter().all(|&n| n == t));
        }
        assert!(check_fidelity(&run).is_ok());
    }

    #[test]
    fn everything_erased_never_advances() {
        let g = Graph::path(3).unwrap();
        let src = SeededErasures::new(ErasureModel::symmetric(1.0).unwrap(), 1);
        let run = run_repetition(&g, 0.5, &src, &[3.0, 0.0, 0.0], 8).unwrap();
        assert!(run.n_v.iter().skip(1).all(|r| r.iter().all(|&n| n == 0)));
    }

    #[test]
    fn rejects_asymmetric() {
        let g = Graph::path(3).unwrap();
        let src = SeededErasures::new(ErasureModel::asymmetric(0.1).unwrap(), 1);
        assert!(matches!(
            run_repetition(&g, 0.5, &src, &[3.0, 0.0, 0.0], 8),
            Err(ProtocolError::ModelMismatch { .. })
        ));
    }
}
