//! Tree-coded consensus for asymmetric erasures.
//!
//! Each node runs one encoder and broadcasts the same information packet
//! `b_t` (an iterate or a wait) to all neighbors; each directed link
//! carries the `n` coded packets of `c_t`, erased independently. Every
//! receiver runs an anytime decoder per incoming link and only ever uses
//! the decoded prefix, so no iterate is built from a wrong value.
//!
//! Node `i` in round `t` sends `x_i(m + 1)` iff `ℓ + 1 > m`, where `m` is
//! the last iterate it sent (-1 initially) and `ℓ` is the smallest latest
//! iterate index it has decoded from any neighbor.

use std::sync::Arc;

use crate::anytime::{AnytimeDecoder, CodeError, CodeParams, Encoder, TreeCode, DEFAULT_HORIZON_CAP};
use crate::erasure::{ErasureSource, RoundErasures};
use crate::gf2::BitVector;
use crate::graph::Graph;

use super::{check_dims, node_update, slot, slot_endpoints, Protocol, ProtocolError, ProtocolRun, Symbol, Transmission};

/// Bits per framed packet: 8-bit tag plus a 64-bit IEEE-754 payload.
pub const FRAME_BITS: usize = 72;
const TAG_WAIT: u64 = 0;
const TAG_DATA: u64 = 1;

/// Frame a data value (`Some`) or a wait (`None`) into `lambda` bits.
pub fn frame(value: Option<f64>, lambda: usize) -> BitVector {
    assert!(lambda >= FRAME_BITS, "packets need at least {FRAME_BITS} bits");
    let mut words = vec![0u64; lambda.div_ceil(64)];
    match value {
        None => words[0] = TAG_WAIT,
        Some(x) => {
            let bits = x.to_bits();
            words[0] = TAG_DATA | (bits << 8);
            words[1] = bits >> 56;
        }
    }
    BitVector::from_words(words, lambda)
}

/// Inverse of [`frame`]; `None` for a wait.
pub fn unframe(b: &BitVector) -> Option<f64> {
    let w = b.words();
    match w[0] & 0xff {
        TAG_DATA => Some(f64::from_bits((w[0] >> 8) | (w[1] << 56))),
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct TreecodeSim<'g> {
    g: &'g Graph,
    eps: f64,
    code: Arc<TreeCode>,
    encoders: Vec<Encoder>,
    /// One decoder per directed slot.
    decoders: Vec<AnytimeDecoder>,
    consumed: Vec<usize>,
    /// Highest iterate index decoded per directed slot (`n_vu`).
    received: Vec<i64>,
    /// Last iterate index each node sent (`m`).
    sent: Vec<i64>,
    iterates: Vec<Vec<f64>>,
    t: usize,
}

impl<'g> TreecodeSim<'g> {
    pub fn new(g: &'g Graph, eps: f64, x0: &[f64], code: Arc<TreeCode>) -> Result<Self, ProtocolError> {
        check_dims(g, x0)?;
        if code.params().lambda_bits < FRAME_BITS {
            return Err(CodeError::InvalidParams(format!(
                "tree-coded consensus needs Λ >= {FRAME_BITS}, got {}",
                code.params().lambda_bits
            ))
            .into());
        }
        let slots = 2 * g.edge_count();
        Ok(Self {
            g,
            eps,
            encoders: (0..g.n()).map(|_| Encoder::new(Arc::clone(&code))).collect(),
            decoders: (0..slots).map(|_| AnytimeDecoder::new(Arc::clone(&code))).collect(),
            consumed: vec![0; slots],
            received: vec![-1; slots],
            sent: vec![-1; g.n()],
            iterates: x0.iter().map(|&v| vec![v]).collect(),
            code,
            t: 0,
        })
    }

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

    /// `Q_in^{ji}` is the same for every neighbor `j`; this is node `i`'s
    /// broadcast history.
    pub fn broadcast_history(&self, i: usize) -> &[BitVector] {
        self.encoders[i].history()
    }

    fn min_received(&self, v: usize) -> i64 {
        self.g
            .neighbors(v)
            .iter()
            .map(|&u| self.received[slot(self.g, v, u)])
            .min()
            .unwrap_or(i64::MAX / 2)
    }

    /// Play one round with the erasure realization of every packet slot.
    pub fn step(&mut self, slots: &[RoundErasures]) -> Result<Vec<Transmission>, ProtocolError> {
        let g = self.g;
        let params = *self.code.params();
        assert_eq!(slots.len(), params.n, "one realization per coded packet");
        self.t += 1;

        let mut symbols = Vec::with_capacity(g.n());
        let mut packets = Vec::with_capacity(g.n());
        for i in 0..g.n() {
            let m = self.sent[i];
            let symbol = if self.min_received(i) + 1 > m {
                self.sent[i] = m + 1;
                Symbol::Data { iter: (m + 1) as usize }
            } else {
                Symbol::Wait
            };
            let value = match symbol {
                Symbol::Data { iter } => Some(self.iterates[i][iter]),
                Symbol::Wait => None,
            };
            packets.push(self.encoders[i].push(frame(value, params.lambda_bits))?);
            symbols.push(symbol);
        }

        let mut txs = Vec::with_capacity(self.decoders.len());
        for s in 0..self.decoders.len() {
            let (v, u) = slot_endpoints(g, s);
            let rx: Vec<(usize, BitVector)> = (0..params.n)
                .filter(|&j| slots[j].bits()[s])
                .map(|j| (j, packets[u][j].clone()))
                .collect();
            txs.push(Transmission {
                src: u,
                dst: v,
                symbol: symbols[u],
                delivered: rx.len() as u32,
            });
            self.decoders[s].receive(&rx)?;
            let prefix = self.decoders[s].prefix();
            for k in self.consumed[s]..prefix {
                let block = self.decoders[s].decoded(k);
                if block != self.encoders[u].history()[k] {
                    return Err(ProtocolError::Unsound {
                        receiver: v,
                        sender: u,
                        step: k + 1,
                    });
                }
                if unframe(&block).is_some() {
                    self.received[s] += 1;
                }
            }
            self.consumed[s] = prefix;
        }

        for v in 0..g.n() {
            let k = self.n_v(v);
            let reachable = (self.sent[v] + 1).min(1 + self.min_received(v));
            if reachable > k as i64 {
                let next = node_update(
                    self.iterates[v][k],
                    g.neighbors(v).iter().map(|&u| self.iterates[u][k]),
                    self.eps,
                );
                self.iterates[v].push(next);
            }
        }
        Ok(txs)
    }
}

/// Build the code for a run of `rounds` rounds with the default cap.
pub fn code_for_run(params: CodeParams, rounds: usize) -> Result<Arc<TreeCode>, CodeError> {
    Ok(Arc::new(TreeCode::with_cap(params, rounds.max(1), DEFAULT_HORIZON_CAP)?))
}

pub fn run_treecode(
    g: &Graph,
    eps: f64,
    source: &dyn ErasureSource,
    x0: &[f64],
    rounds: usize,
    code: Arc<TreeCode>,
) -> Result<ProtocolRun, ProtocolError> {
    if rounds > code.horizon() {
        return Err(CodeError::HorizonExceeded {
            requested: rounds,
            cap: code.horizon(),
        }
        .into());
    }
    let n_slots = code.params().n;
    let mut sim = TreecodeSim::new(g, eps, x0, code)?;
    let snapshot = |sim: &TreecodeSim| -> (Vec<usize>, Vec<f64>) {
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
        let slots: Vec<RoundErasures> = (0..n_slots).map(|j| source.round(g, t, j)).collect();
        transmissions.push(sim.step(&slots)?);
        erasures.push(slots);
        let (nv, st) = snapshot(&sim);
        n_v.push(nv);
        states.push(st);
        n_vu.push(sim.received.clone());
    }
    Ok(ProtocolRun {
        protocol: Protocol::Treecode,
        graph: g.clone(),
        mode: source.mode(),
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

    #[test]
    fn framing_round_trips() {
        for x in [0.0, -1.5, f64::MAX, 1e-300, std::f64::consts::PI] {
            assert_eq!(unframe(&frame(Some(x), 72)).unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(unframe(&frame(None, 80)), None);
    }
}
